"""Gradient verification: central finite differences for every analytic
gradient, and exhaustive enumeration for the REINFORCE estimator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .losses import triplet_loss_and_grad
from .models import ToyDiscriminator, ToyGenerator, caption_space

FD_TOLERANCE = 1e-4
REINFORCE_TOLERANCE = 1e-9


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` per coordinate."""
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_gradient(fun: Callable[[np.ndarray], float], params: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for i in range(params.size):
        step = np.zeros_like(params)
        step.flat[i] = epsilon
        grad.flat[i] = (fun(params + step) - fun(params - step)) / (2 * epsilon)
    return grad


def finite_difference_check(loss: Callable[[np.ndarray], tuple[float, np.ndarray]], params: np.ndarray,
                            epsilon: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest per-coordinate relative error between the analytic gradient
    returned by ``loss(params) -> (value, grad)`` and central differences."""
    params = np.asarray(params, dtype=float)
    _, analytic = loss(params)
    numeric = numerical_gradient(lambda p: loss(p)[0], params, epsilon)
    return float(relative_error(analytic, numeric, floor).max())


def complex_step_gradient(fun: Callable[[np.ndarray], complex], params: np.ndarray, step: float = 1e-30) -> np.ndarray:
    """Derivative of a real-analytic ``fun`` by complex-step differentiation;
    accurate to machine precision with no subtractive cancellation."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for i in range(params.size):
        z = params.astype(complex)
        z[i] += 1j * step
        grad[i] = np.imag(fun(z)) / step
    return grad


def expected_reward(generator: ToyGenerator, x: np.ndarray, reward: Callable, theta=None):
    """``sum_w p(w | x) R(w)`` over every caption of the generator's length."""
    caps = caption_space(generator.vocab_size, generator.length)
    rewards = np.array([reward(tuple(c), x) for c in caps])
    return np.exp(generator.caption_logprobs(x, caps, theta)) @ rewards


def reinforce_enumeration(generator: ToyGenerator, x: np.ndarray, reward: Callable) -> tuple[np.ndarray, np.ndarray]:
    """``(probability-weighted estimator sum, exact gradient)``.

    The first sums ``p(w) R(w) grad log p(w)`` over all captions; the second
    differentiates the expected reward directly by complex step.
    """
    caps = caption_space(generator.vocab_size, generator.length)
    probs = np.exp(generator.caption_logprobs(x, caps))
    est = np.zeros(generator.layout.size)
    for c, pw in zip(caps, probs):
        est += pw * reward(tuple(c), x) * generator.grad_log_prob(tuple(c), x)
    exact = complex_step_gradient(lambda th: expected_reward(generator, x, reward, th), generator.theta)
    return est, exact


# ---------------------------------------------------------------------------
# the suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckRow:
    name: str
    instances: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def _random_caption(rng, vocab, length):
    return tuple(int(t) for t in rng.integers(vocab, size=length))


def _random_generator(rng, vocab=None, length=None):
    vocab = vocab or int(rng.integers(2, 5))
    length = length or int(rng.integers(1, 4))
    m = int(rng.integers(2, 5))
    return ToyGenerator(vocab, m, hidden_dim=3, spatial_dim=2, length=length,
                        seed=int(rng.integers(2**31)), scale=0.7)


def check_generator_loss(rng, lambda_attn=0.1, mu_entropy=0.05) -> float:
    gen = _random_generator(rng)
    batch = [(_random_caption(rng, gen.vocab_size, int(rng.integers(1, 4))), rng.standard_normal(gen.feature_dim))
             for _ in range(3)]
    caps, xs = [w for w, _ in batch], np.array([x for _, x in batch])
    return finite_difference_check(lambda th: gen.batch_loss_and_grad(caps, xs, lambda_attn, mu_entropy, th), gen.theta)


def check_discriminator_loss(rng) -> float:
    V, m = int(rng.integers(2, 6)), int(rng.integers(2, 5))
    disc = ToyDiscriminator(V, m, embed_dim=3, seed=int(rng.integers(2**31)), scale=0.7)
    mk = lambda k: ([_random_caption(rng, V, int(rng.integers(1, 4))) for _ in range(k)], rng.standard_normal((k, m)))
    pos, neg_l, neg_u = mk(3), mk(3), mk(2)
    neg = (neg_l[0] + neg_u[0], np.concatenate([neg_l[1], neg_u[1]]))
    return finite_difference_check(lambda th: disc.loss_and_grad(pos, neg, th), disc.theta)


def check_phase3_loss(rng, lambda_rl=0.2) -> float:
    """Phase-3 loss at fixed sampled captions: the reward term depends on the
    generator only through the sample, so its gradient path is excluded and
    the remaining gradient is that of the captioning loss."""
    gen = _random_generator(rng)
    disc = ToyDiscriminator(gen.vocab_size, gen.feature_dim, embed_dim=3, seed=int(rng.integers(2**31)), scale=0.7)
    labeled = [(_random_caption(rng, gen.vocab_size, gen.length), rng.standard_normal(gen.feature_dim)) for _ in range(2)]
    unlabeled = rng.standard_normal((2, gen.feature_dim))
    xs = np.concatenate([np.array([x for _, x in labeled]), unlabeled])
    w_hat = gen.sample_batch(xs, rng)
    reward_term = -lambda_rl * float(np.log(disc.probs([tuple(w) for w in w_hat], xs)).sum())
    caps, lx = [w for w, _ in labeled], np.array([x for _, x in labeled])

    def loss(th):
        v, g = gen.batch_loss_and_grad(caps, lx, 0.1, 0.05, th)
        return v + reward_term, g

    return finite_difference_check(loss, gen.theta)


def check_reinforce_surrogate(rng, lambda_rl=0.2) -> float:
    """The REINFORCE step is the gradient of ``-lambda * sum R(w_hat) log p(w_hat)``
    with rewards held fixed."""
    gen = _random_generator(rng)
    disc = ToyDiscriminator(gen.vocab_size, gen.feature_dim, embed_dim=3, seed=int(rng.integers(2**31)), scale=0.7)
    xs = rng.standard_normal((3, gen.feature_dim))
    w_hat = gen.sample_batch(xs, rng)
    rewards = np.log(disc.probs([tuple(w) for w in w_hat], xs))

    def loss(th):
        v = -lambda_rl * sum(r * gen.log_prob(tuple(w), x, th) for r, w, x in zip(rewards, w_hat, xs))
        return float(v), -lambda_rl * gen.weighted_score_grad(w_hat, xs, rewards, th)

    return finite_difference_check(loss, gen.theta)


def check_triplet_loss(rng, alpha=0.1) -> float:
    n = int(rng.integers(2, 6))
    s = rng.uniform(-1, 1, size=(n, n))

    def loss(flat):
        v, g = triplet_loss_and_grad(flat.reshape(n, n), alpha)
        return v, g.ravel()

    return finite_difference_check(loss, s.ravel(), epsilon=1e-7)


def check_reinforce_unbiased(rng) -> float:
    gen = _random_generator(rng, vocab=int(rng.integers(2, 5)), length=int(rng.integers(1, 4)))
    x = rng.standard_normal(gen.feature_dim)
    table = {tuple(c): float(r) for c, r in zip(caption_space(gen.vocab_size, gen.length),
                                                 rng.uniform(-2, 0, size=gen.vocab_size ** gen.length))}
    est, exact = reinforce_enumeration(gen, x, lambda w, _x: table[w])
    return float(np.abs(est - exact).max())


def run_gradient_suite(seed: int = 0, instances: int = 50) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    checks = [
        ("captioning loss", check_generator_loss, FD_TOLERANCE),
        ("discriminator loss", check_discriminator_loss, FD_TOLERANCE),
        ("phase-3 loss", check_phase3_loss, FD_TOLERANCE),
        ("reinforce surrogate", check_reinforce_surrogate, FD_TOLERANCE),
        ("triplet loss", check_triplet_loss, FD_TOLERANCE),
        ("reinforce unbiased (abs)", check_reinforce_unbiased, REINFORCE_TOLERANCE),
    ]
    rows = []
    for name, fn, tol in checks:
        worst = max(fn(rng) for _ in range(instances))
        rows.append(CheckRow(name, instances, worst, tol))
    return rows


def format_rows(rows: list[CheckRow]) -> str:
    lines = [f"{'check':<26} {'n':>4} {'worst':>11} {'tol':>8}  result"]
    for r in rows:
        lines.append(f"{r.name:<26} {r.instances:>4} {r.worst:>11.3e} {r.tolerance:>8.0e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
