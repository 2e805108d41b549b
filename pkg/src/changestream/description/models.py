"""Small differentiable stand-ins for the caption generator, the caption
discriminator and the image-only change classifier.

Every model keeps its parameters in one flat vector ``theta`` so losses can be
checked coordinate by coordinate against finite differences.  All forward
passes accept an explicit ``theta`` (possibly complex, for complex-step
differentiation); without one they use the model's own.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from ..core import NonDistributionAttention

NUM_TEMPORAL_SLOTS = 3  # before / after / difference


class ParamLayout:
    """Named blocks packed into one flat vector."""

    def __init__(self, shapes: dict[str, tuple[int, ...]]):
        self.shapes = dict(shapes)
        self.slices = {}
        start = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    def unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {k: theta[s].reshape(self.shapes[k]) for k, s in self.slices.items()}

    def zeros(self, dtype=float) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        flat = np.zeros(self.size, dtype=dtype)
        return flat, self.unpack(flat)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    # shift by the real part only, so complex perturbations pass through untouched
    m = np.max(np.real(z), axis=axis, keepdims=True)
    return z - m - np.log(np.sum(np.exp(z - m), axis=axis, keepdims=True))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(z, axis))


def sigmoid(z):
    return expit(z)


#: probabilities handed out by the models stay this far from 0 and 1
PROB_EPS = 1e-12


def entropy(a: np.ndarray) -> float:
    """Shannon entropy in nats, with ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    nz = a[a > 0]
    return float(-(nz * np.log(nz)).sum())


@dataclass(frozen=True)
class GeneratorOutput:
    """What one teacher-forced generator pass hands to the captioning loss."""

    token_logprobs: np.ndarray
    spatial_map_before: np.ndarray
    spatial_map_after: np.ndarray
    temporal_attention: np.ndarray  # (K, slots), rows sum to one

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.temporal_attention, dtype=float))
        if np.any(a < 0) or not np.allclose(a.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise NonDistributionAttention("every temporal attention row must be a distribution")
        for A in (self.spatial_map_before, self.spatial_map_after):
            if np.any(np.asarray(A) < 0):
                raise ValueError("spatial attention maps must be non-negative")


def caption_space(vocab_size: int, length: int) -> np.ndarray:
    """Every caption of ``length`` tokens, one per row, in lexicographic order."""
    return np.array(list(itertools.product(range(vocab_size), repeat=length)), dtype=int).reshape(-1, length)


class ToyGenerator:
    """Autoregressive caption model conditioned on a pair feature ``x``.

    ``h = tanh(U x)`` is the hidden state exposed as the pair representation.
    Token ``k`` is drawn from ``softmax(C h + T[w_{k-1}])`` where row ``V`` of
    ``T`` is the start state.  Spatial attention maps are ``sigmoid(Gb x)`` and
    ``sigmoid(Ga x)``; the temporal attention at step ``k`` is
    ``softmax(Z x + R[w_{k-1}])``.
    """

    def __init__(self, vocab_size: int, feature_dim: int, hidden_dim: int = 8,
                 spatial_dim: int = 4, length: int = 2, theta: Optional[np.ndarray] = None,
                 seed: int = 0, scale: float = 0.1):
        self.vocab_size, self.feature_dim = vocab_size, feature_dim
        self.hidden_dim, self.spatial_dim, self.length = hidden_dim, spatial_dim, length
        V = vocab_size
        self.layout = ParamLayout({
            "U": (hidden_dim, feature_dim), "C": (V, hidden_dim), "T": (V + 1, V),
            "Gb": (spatial_dim, feature_dim), "Ga": (spatial_dim, feature_dim),
            "Z": (NUM_TEMPORAL_SLOTS, feature_dim), "R": (V + 1, NUM_TEMPORAL_SLOTS),
        })
        if theta is None:
            theta = scale * np.random.default_rng(seed).standard_normal(self.layout.size)
        self.theta = np.array(theta, dtype=float)

    def copy(self, theta: Optional[np.ndarray] = None) -> "ToyGenerator":
        return ToyGenerator(self.vocab_size, self.feature_dim, self.hidden_dim, self.spatial_dim,
                            self.length, self.theta if theta is None else theta)

    def _params(self, theta):
        return self.layout.unpack(self.theta if theta is None else theta)

    @property
    def start(self) -> int:
        return self.vocab_size

    def hidden(self, x: np.ndarray, theta=None) -> np.ndarray:
        P = self._params(theta)
        return np.tanh(P["U"] @ np.asarray(x))

    def transition_logprobs(self, x: np.ndarray, theta=None) -> np.ndarray:
        """``(V+1, V)`` table: row ``prev`` holds ``log p(next | prev, x)``."""
        P = self._params(theta)
        h = np.tanh(P["U"] @ x)
        return log_softmax((P["C"] @ h)[None, :] + P["T"])

    def caption_logprobs(self, x: np.ndarray, captions: np.ndarray, theta=None) -> np.ndarray:
        """``log p(w | x)`` for each row of ``captions`` (equal lengths)."""
        table = self.transition_logprobs(x, theta)
        captions = np.atleast_2d(captions)
        prev = np.concatenate([np.full((captions.shape[0], 1), self.start), captions[:, :-1]], axis=1)
        return table[prev, captions].sum(axis=1)

    def log_prob(self, w: Sequence[int], x: np.ndarray, theta=None) -> float:
        return self.caption_logprobs(x, np.asarray(w, dtype=int)[None, :], theta)[0]

    def caption_distribution(self, x: np.ndarray, theta=None) -> tuple[np.ndarray, np.ndarray]:
        """All length-K captions and their probabilities."""
        caps = caption_space(self.vocab_size, self.length)
        return caps, np.exp(self.caption_logprobs(x, caps, theta))

    def forward(self, w: Sequence[int], x: np.ndarray, theta=None) -> GeneratorOutput:
        P = self._params(theta)
        h = np.tanh(P["U"] @ x)
        prev = self.start
        logps, attn = [], []
        for tok in w:
            logps.append(log_softmax(P["C"] @ h + P["T"][prev])[tok])
            attn.append(softmax(P["Z"] @ x + P["R"][prev]))
            prev = tok
        return GeneratorOutput(np.array(logps), sigmoid(P["Gb"] @ x), sigmoid(P["Ga"] @ x), np.array(attn))

    def grad_log_prob(self, w: Sequence[int], x: np.ndarray, theta=None) -> np.ndarray:
        """Gradient of ``log p(w | x)`` with respect to ``theta``."""
        return -self._nll_grad(w, x, theta)[1]

    def _nll_grad(self, w, x, theta=None):
        P = self._params(theta)
        flat, G = self.layout.zeros()
        h = np.tanh(P["U"] @ x)
        base = P["C"] @ h
        dh = np.zeros_like(h)
        prev, nll = self.start, 0.0
        for tok in w:
            ls = log_softmax(base + P["T"][prev])
            nll -= ls[tok]
            d = np.exp(ls)
            d[tok] -= 1.0
            G["C"] += np.outer(d, h)
            G["T"][prev] += d
            dh += P["C"].T @ d
            prev = tok
        G["U"] += np.outer(dh * (1.0 - h * h), x)
        return nll, flat

    def loss_and_grad(self, w: Sequence[int], x: np.ndarray, lambda_attn: float,
                      mu_entropy: float, theta=None) -> tuple[float, np.ndarray]:
        """Captioning loss of one pair and its gradient."""
        P = self._params(theta)
        nll, flat = self._nll_grad(w, x, theta)
        G = self.layout.unpack(flat)
        value = nll
        for name in ("Gb", "Ga"):
            s = sigmoid(P[name] @ x)
            value += lambda_attn * s.sum()
            G[name] += lambda_attn * np.outer(s * (1.0 - s), x)
        prev = self.start
        for tok in w:
            la = log_softmax(P["Z"] @ x + P["R"][prev])
            a = np.exp(la)
            H = float(-(a * la).sum())
            value -= mu_entropy * H
            # d(-mu H)/dz = mu * a * (log a + H)
            dz = mu_entropy * a * (la + H)
            G["Z"] += np.outer(dz, x)
            G["R"][prev] += dz
            prev = tok
        return float(value), flat

    def batch_loss_and_grad(self, captions: Sequence[Sequence[int]], xs: np.ndarray, lambda_attn: float,
                            mu_entropy: float, theta=None) -> tuple[float, np.ndarray]:
        """Sum of :meth:`loss_and_grad` over a batch, vectorized per caption length."""
        P = self._params(theta)
        flat, G = self.layout.zeros()
        xs = np.atleast_2d(xs)
        value = 0.0
        for name in ("Gb", "Ga"):
            s = sigmoid(xs @ P[name].T)
            value += lambda_attn * float(s.sum())
            G[name] += lambda_attn * (s * (1.0 - s)).T @ xs
        lengths = np.array([len(w) for w in captions])
        for K in np.unique(lengths):
            rows = np.flatnonzero(lengths == K)
            X = xs[rows]
            W = np.array([captions[i] for i in rows], dtype=int)
            h = np.tanh(X @ P["U"].T)
            base = h @ P["C"].T
            dh = np.zeros_like(h)
            prev = np.full(len(rows), self.start)
            zx = X @ P["Z"].T
            n = np.arange(len(rows))
            for k in range(K):
                tok = W[:, k]
                ls = log_softmax(base + P["T"][prev])
                value -= float(ls[n, tok].sum())
                d = np.exp(ls)
                d[n, tok] -= 1.0
                G["C"] += d.T @ h
                np.add.at(G["T"], prev, d)
                dh += d @ P["C"]
                la = log_softmax(zx + P["R"][prev])
                a = np.exp(la)
                H = -(a * la).sum(axis=1)
                value -= mu_entropy * float(H.sum())
                dz = mu_entropy * a * (la + H[:, None])
                G["Z"] += dz.T @ X
                np.add.at(G["R"], prev, dz)
                prev = tok
            G["U"] += (dh * (1.0 - h * h)).T @ X
        return value, flat

    def transition_logprobs_batch(self, xs: np.ndarray, theta=None) -> np.ndarray:
        """``(n, V+1, V)`` stack of :meth:`transition_logprobs`."""
        P = self._params(theta)
        h = np.tanh(np.atleast_2d(xs) @ P["U"].T)
        return log_softmax((h @ P["C"].T)[:, None, :] + P["T"][None, :, :])

    def sample_batch(self, xs: np.ndarray, rng: np.random.Generator, theta=None) -> np.ndarray:
        """One caption per row of ``xs`` by inverse-CDF sampling; step ``k``
        consumes one uniform per row."""
        cdf = np.cumsum(np.exp(self.transition_logprobs_batch(xs, theta)), axis=2)
        n = cdf.shape[0]
        rows = np.arange(n)
        prev = np.full(n, self.start)
        out = np.empty((n, self.length), dtype=int)
        for k in range(self.length):
            c = cdf[rows, prev]
            u = rng.random(n) * c[:, -1]
            tok = np.minimum((c <= u[:, None]).sum(axis=1), self.vocab_size - 1)
            out[:, k] = tok
            prev = tok
        return out

    def sample(self, x: np.ndarray, rng: np.random.Generator, theta=None) -> tuple[int, ...]:
        return tuple(int(t) for t in self.sample_batch(np.asarray(x)[None, :], rng, theta)[0])

    def weighted_score_grad(self, captions: np.ndarray, xs: np.ndarray, weights: np.ndarray,
                            theta=None) -> np.ndarray:
        """``sum_i weights_i * grad log p(captions_i | xs_i)`` for equal-length captions."""
        P = self._params(theta)
        flat, G = self.layout.zeros()
        xs = np.atleast_2d(xs)
        captions = np.atleast_2d(captions)
        wts = np.asarray(weights, dtype=float)
        h = np.tanh(xs @ P["U"].T)
        base = h @ P["C"].T
        dh = np.zeros_like(h)
        n = np.arange(len(xs))
        prev = np.full(len(xs), self.start)
        for k in range(captions.shape[1]):
            tok = captions[:, k]
            d = -np.exp(log_softmax(base + P["T"][prev]))
            d[n, tok] += 1.0
            d *= wts[:, None]
            G["C"] += d.T @ h
            np.add.at(G["T"], prev, d)
            dh += d @ P["C"]
            prev = tok
        G["U"] += (dh * (1.0 - h * h)).T @ xs
        return flat

    def greedy(self, x: np.ndarray, theta=None) -> tuple[int, ...]:
        table = self.transition_logprobs(x, theta)
        prev, out = self.start, []
        for _ in range(self.length):
            prev = int(np.argmax(table[prev]))
            out.append(prev)
        return tuple(out)


def bag_of_tokens(captions: Sequence[Sequence[int]], vocab_size: int) -> np.ndarray:
    """Row-normalized token counts, one row per caption."""
    out = np.zeros((len(captions), vocab_size))
    for i, w in enumerate(captions):
        np.add.at(out[i], np.asarray(w, dtype=int), 1.0)
        out[i] /= len(w)
    return out


class ToyDiscriminator:
    """``D(w, x) = sigmoid(e(w) . (B x + c) + b)`` with ``e(w)`` the mean token
    embedding of the caption."""

    def __init__(self, vocab_size: int, feature_dim: int, embed_dim: int = 8,
                 theta: Optional[np.ndarray] = None, seed: int = 0, scale: float = 0.1):
        self.vocab_size, self.feature_dim, self.embed_dim = vocab_size, feature_dim, embed_dim
        self.layout = ParamLayout({"E": (vocab_size, embed_dim), "B": (embed_dim, feature_dim),
                                   "c": (embed_dim,), "b": (1,)})
        if theta is None:
            theta = scale * np.random.default_rng(seed).standard_normal(self.layout.size)
        self.theta = np.array(theta, dtype=float)

    def copy(self, theta=None) -> "ToyDiscriminator":
        return ToyDiscriminator(self.vocab_size, self.feature_dim, self.embed_dim,
                                self.theta if theta is None else theta)

    def logits(self, captions, xs, theta=None) -> np.ndarray:
        P = self.layout.unpack(self.theta if theta is None else theta)
        bags = bag_of_tokens(captions, self.vocab_size)
        xs = np.atleast_2d(xs)
        return np.einsum("ne,ne->n", bags @ P["E"], xs @ P["B"].T + P["c"]) + P["b"][0]

    def probs(self, captions, xs, theta=None) -> np.ndarray:
        return np.clip(sigmoid(self.logits(captions, xs, theta)), PROB_EPS, 1.0 - PROB_EPS)

    def __call__(self, w: Sequence[int], x: np.ndarray) -> float:
        return float(self.probs([w], np.asarray(x)[None, :])[0])

    def loss_and_grad(self, pos, neg, theta=None) -> tuple[float, np.ndarray]:
        """Binary cross-entropy summed over positive and negative
        ``(captions, xs)`` batches, with its gradient."""
        P = self.layout.unpack(self.theta if theta is None else theta)
        flat, G = self.layout.zeros()
        value = 0.0
        for (caps, xs), positive in ((pos, True), (neg, False)):
            if len(caps) == 0:
                continue
            xs = np.atleast_2d(xs)
            bags = bag_of_tokens(caps, self.vocab_size)
            emb = bags @ P["E"]
            proj = xs @ P["B"].T + P["c"]
            s = np.einsum("ne,ne->n", emb, proj) + P["b"][0]
            if positive:
                value += float(np.logaddexp(0.0, -s).sum())  # -log sigmoid(s)
                ds = sigmoid(s) - 1.0
            else:
                value += float(np.logaddexp(0.0, s).sum())  # -log(1 - sigmoid(s))
                ds = sigmoid(s)
            G["E"] += bags.T @ (ds[:, None] * proj)
            G["B"] += (ds[:, None] * emb).T @ xs
            G["c"] += (ds[:, None] * emb).sum(axis=0)
            G["b"] += ds.sum()
        return value, flat


class ToyImageOnlyDetector:
    """``sigmoid(v . tanh(W x) + b)``: probability that a pair shows no change.

    ``tanh(W x)`` is the penultimate layer, used as the pair representation.
    """

    def __init__(self, feature_dim: int, hidden_dim: int = 8, theta=None, seed: int = 0, scale: float = 0.1):
        self.feature_dim, self.hidden_dim = feature_dim, hidden_dim
        self.layout = ParamLayout({"W": (hidden_dim, feature_dim), "v": (hidden_dim,), "b": (1,)})
        if theta is None:
            theta = scale * np.random.default_rng(seed).standard_normal(self.layout.size)
        self.theta = np.array(theta, dtype=float)

    def penultimate(self, xs, theta=None) -> np.ndarray:
        P = self.layout.unpack(self.theta if theta is None else theta)
        return np.tanh(np.atleast_2d(xs) @ P["W"].T)

    def probs(self, xs, theta=None) -> np.ndarray:
        P = self.layout.unpack(self.theta if theta is None else theta)
        return np.clip(sigmoid(self.penultimate(xs, theta) @ P["v"] + P["b"][0]), PROB_EPS, 1.0 - PROB_EPS)

    def __call__(self, x) -> float:
        return float(self.probs(np.asarray(x)[None, :])[0])

    def loss_and_grad(self, xs, no_change_labels, theta=None) -> tuple[float, np.ndarray]:
        """Binary cross-entropy; label 1 means the pair shows no change."""
        P = self.layout.unpack(self.theta if theta is None else theta)
        flat, G = self.layout.zeros()
        xs = np.atleast_2d(xs)
        y = np.asarray(no_change_labels, dtype=float)
        a = np.tanh(xs @ P["W"].T)
        s = a @ P["v"] + P["b"][0]
        value = float((y * np.logaddexp(0.0, -s) + (1 - y) * np.logaddexp(0.0, s)).sum())
        ds = sigmoid(s) - y
        G["v"] += a.T @ ds
        G["b"] += ds.sum()
        G["W"] += ((ds[:, None] * P["v"][None, :]) * (1 - a * a)).T @ xs
        return value, flat

