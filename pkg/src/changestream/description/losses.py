"""Training objectives for the captioning pipeline and the two pairwise change
statistics built from trained models.

Three different weights share one letter in the literature; here they are
``lambda_attn`` (attention sparsity), ``lambda_rl`` (discriminator reward) and,
in :mod:`changestream.detectors`, ``lambda_rc``.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..core import NO_CHANGE, ScoreOutOfRange
from .models import GeneratorOutput, ToyGenerator, ToyImageOnlyDetector, caption_space, entropy

LAMBDA_ATTN = 0.1
MU_ENTROPY = 0.05
LAMBDA_RL = 0.2
TRIPLET_MARGIN = 0.1

Discriminator = Callable[[Sequence[int], np.ndarray], float]


def generator_loss(batch: Sequence[GeneratorOutput], lambda_attn: float = LAMBDA_ATTN,
                   mu_entropy: float = MU_ENTROPY) -> float:
    """Negative log-likelihood plus L1 attention penalties minus the temporal
    attention entropy bonus, summed over the batch."""
    total = 0.0
    for out in batch:
        total -= float(np.sum(out.token_logprobs))
        total += lambda_attn * float(np.abs(out.spatial_map_before).sum())
        total += lambda_attn * float(np.abs(out.spatial_map_after).sum())
        total -= mu_entropy * sum(entropy(a) for a in np.atleast_2d(out.temporal_attention))
    return total


def _check_probs(name: str, scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float).ravel()
    if np.any(~((scores > 0) & (scores < 1))):
        raise ScoreOutOfRange(f"{name}: discriminator outputs must lie strictly inside (0, 1)")
    return scores


def discriminator_loss(pos, neg_labeled=(), neg_unlabeled=()) -> float:
    """``-sum log D(pos) - sum log(1 - D(neg_labeled)) - sum log(1 - D(neg_unlabeled))``."""
    pos = _check_probs("pos", pos)
    neg_l = _check_probs("neg_labeled", neg_labeled)
    neg_u = _check_probs("neg_unlabeled", neg_unlabeled)
    return float(-np.log(pos).sum() - np.log1p(-neg_l).sum() - np.log1p(-neg_u).sum())


def phase3_loss(generator: ToyGenerator, labeled: Sequence[tuple[np.ndarray, Sequence[int]]],
                unlabeled: Sequence[np.ndarray], discriminator: Discriminator,
                lambda_rl: float = LAMBDA_RL, seed: int = 0,
                lambda_attn: float = LAMBDA_ATTN, mu_entropy: float = MU_ENTROPY) -> float:
    """Captioning loss on labeled pairs minus ``lambda_rl`` times the log
    discriminator score of a sampled caption for every labeled and unlabeled
    pair.  Captions are drawn in order (labeled first) from one generator
    seeded with ``seed``."""
    total = sum(generator.loss_and_grad(w, x, lambda_attn, mu_entropy)[0] for x, w in labeled)
    if lambda_rl == 0:
        return float(total)
    rng = np.random.default_rng(seed)
    for x in [x for x, _ in labeled] + list(unlabeled):
        w_hat = generator.sample(x, rng)
        total -= lambda_rl * float(np.log(discriminator(w_hat, x)))
    return float(total)


def expected_phase3_loss(generator: ToyGenerator, labeled, unlabeled, discriminator: Discriminator,
                         lambda_rl: float = LAMBDA_RL, lambda_attn: float = LAMBDA_ATTN,
                         mu_entropy: float = MU_ENTROPY, theta=None) -> float:
    """:func:`phase3_loss` with the sampled term replaced by its exact
    expectation over all captions of the generator's length."""
    labeled = list(labeled)
    total = 0.0
    if labeled:
        total = generator.batch_loss_and_grad([w for _, w in labeled], np.array([x for x, _ in labeled]),
                                              lambda_attn, mu_entropy, theta)[0]
    if lambda_rl == 0:
        return float(total)
    xs = np.array([x for x, _ in labeled] + list(unlabeled)).reshape(-1, generator.feature_dim)
    caps = caption_space(generator.vocab_size, generator.length)
    table = generator.transition_logprobs_batch(xs, theta)
    prev = np.concatenate([np.full((len(caps), 1), generator.start), caps[:, :-1]], axis=1)
    probs = np.exp(table[:, prev, caps].sum(axis=2))  # (pairs, captions)
    rep_caps = [tuple(c) for c in caps] * len(xs)
    rep_x = np.repeat(xs, len(caps), axis=0)
    rewards = np.log(_discriminator_probs(discriminator, rep_caps, rep_x)).reshape(len(xs), len(caps))
    total -= lambda_rl * float((probs * rewards).sum())
    return float(total)


def _discriminator_probs(discriminator, captions, x) -> np.ndarray:
    if hasattr(discriminator, "probs"):
        return discriminator.probs(captions, x)
    return np.array([discriminator(c, xi) for c, xi in zip(captions, x)])


def reinforce_gradient(generator: ToyGenerator, x: np.ndarray, discriminator: Optional[Discriminator] = None,
                       sample_seed: int = 0, reward: Optional[Callable] = None,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Single-sample score-function estimate of the gradient of the expected
    reward, ``R(w_hat) * grad log p(w_hat | x)``.

    The reward defaults to ``log D(w_hat, x)``.
    """
    if reward is None:
        reward = lambda w, x: float(np.log(discriminator(w, x)))
    if rng is None:
        rng = np.random.default_rng(sample_seed)
    w_hat = generator.sample(x, rng)
    r = reward(w_hat, x)
    if r == 0:
        return np.zeros(generator.layout.size)
    return r * generator.grad_log_prob(w_hat, x)


def triplet_loss(s: np.ndarray, alpha: float = TRIPLET_MARGIN) -> float:
    """Hard triplet loss ``sum_i max_{j != i} (alpha - s_ii + s_ij)_+`` over a
    square caption-by-pair similarity matrix."""
    return triplet_loss_and_grad(s, alpha)[0]


def triplet_loss_and_grad(s: np.ndarray, alpha: float = TRIPLET_MARGIN) -> tuple[float, np.ndarray]:
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    if s.shape != (n, n):
        raise ValueError(f"similarity matrix must be square, got {s.shape}")
    grad = np.zeros_like(s)
    if n < 2:
        return 0.0, grad
    off = np.where(np.eye(n, dtype=bool), -np.inf, s)
    j = np.argmax(off, axis=1)
    rows = np.arange(n)
    hinge = alpha - s[rows, rows] + off[rows, j]
    active = hinge > 0
    grad[rows[active], rows[active]] -= 1.0
    grad[rows[active], j[active]] += 1.0
    return float(hinge[active].sum()), grad


def no_change_statistic(discriminator: Discriminator, x: np.ndarray) -> float:
    """Negated discriminator belief that "no change" describes the pair; high
    when a change is likely."""
    return -float(discriminator(NO_CHANGE, x))


def image_only_statistic(detector: ToyImageOnlyDetector, x: np.ndarray) -> float:
    return -float(detector(x))
