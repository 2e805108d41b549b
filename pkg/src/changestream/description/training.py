"""Toy data and the three-phase training schedule.

Phase 1 fits the generator to labeled pairs.  Phase 2 fits the discriminator
to labeled positives, mismatched labeled captions and labeled captions placed
on unlabeled pairs.  Phase 3 refines the generator against the captioning loss
plus a REINFORCE reward from the frozen discriminator.

Optimization is plain minibatch gradient descent; the step size starts at
``learning_rate`` and is multiplied by ``decay`` every ``decay_every`` epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import NO_CHANGE, DivergedLoss, StatTable, StreamManifest
from ..pair_mining import mine
from .losses import LAMBDA_ATTN, LAMBDA_RL, MU_ENTROPY, expected_phase3_loss
from .models import ToyDiscriminator, ToyGenerator, ToyImageOnlyDetector


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToyStream:
    manifest: StreamManifest
    change_type: int
    features: np.ndarray  # (N, N, m); upper triangle holds pair features


@dataclass
class ToyPairs:
    labeled_x: np.ndarray
    labeled_w: list
    labeled_type: np.ndarray
    unlabeled_x: np.ndarray
    unlabeled_type: np.ndarray
    vocab_size: int
    caption_length: int
    streams: list = field(default_factory=list)

    @property
    def feature_dim(self) -> int:
        return self.labeled_x.shape[1]

    @property
    def labeled(self) -> list:
        return list(zip(self.labeled_x, self.labeled_w))


def change_caption(change_type: int, length: int) -> tuple[int, ...]:
    return (int(change_type),) * length


def make_toy_dataset(num_streams: int = 40, num_frames: int = 6, num_types: int = 4,
                     feature_dim: int = 8, noise: float = 0.2, annotated_fraction: float = 0.5,
                     caption_length: int = 2, seed: int = 0) -> ToyPairs:
    """Streams whose straddling pairs carry a change-type prototype feature and
    whose same-side pairs carry the "no change" prototype, plus Gaussian noise.

    Prototypes are fixed scaled basis vectors, so datasets with different seeds
    share them (use another seed for held-out data).  Change type ``c`` is
    captioned ``(c, c, ...)``; token 0 is reserved for "no change".
    """
    if feature_dim < num_types + 1:
        raise ValueError("feature_dim must exceed num_types")
    rng = np.random.default_rng(seed)
    protos = np.eye(num_types + 1, feature_dim)
    n_annot = int(round(annotated_fraction * num_streams))
    lx, lw, lt, ux, ut, streams = [], [], [], [], [], []
    for i in range(num_streams):
        kappa = int(rng.integers(1, num_frames))
        ctype = int(rng.integers(1, num_types + 1))
        caps = (change_caption(ctype, caption_length),) if i < n_annot else ()
        manifest = StreamManifest(f"toy{i:04d}", num_frames, kappa, caps)
        feats = np.zeros((num_frames, num_frames, feature_dim))
        for t in range(num_frames):
            for u in range(t + 1, num_frames):
                proto = protos[ctype] if t < kappa <= u else protos[0]
                feats[t, u] = proto + noise * rng.standard_normal(feature_dim)
        mined = mine(manifest)
        for lp in mined.labeled:
            lx.append(feats[lp.key])
            lw.append(lp.caption)
            lt.append(0 if lp.caption == NO_CHANGE else ctype)
        for key in mined.unlabeled:
            ux.append(feats[key])
            ut.append(ctype)
        streams.append(ToyStream(manifest, ctype, feats))
    return ToyPairs(np.array(lx), lw, np.array(lt), np.array(ux).reshape(-1, feature_dim), np.array(ut),
                    num_types + 1, caption_length, streams)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs_generator: int = 40
    epochs_discriminator: int = 40
    epochs_phase3: int = 20
    learning_rate: float = 0.5
    learning_rate_phase3: float = 0.05
    decay: float = 0.9
    decay_every: int = 5
    batch_size: int = 32
    lambda_attn: float = LAMBDA_ATTN
    mu_entropy: float = MU_ENTROPY
    lambda_rl: float = LAMBDA_RL
    hidden_dim: int = 8
    embed_dim: int = 8
    spatial_dim: int = 4
    seed: int = 0


@dataclass
class TrainHistory:
    generator: list = field(default_factory=list)
    discriminator: list = field(default_factory=list)
    phase3: list = field(default_factory=list)  # exact expected phase-3 loss, before each epoch and after the last


def _lr(base: float, epoch: int, config: TrainConfig) -> float:
    return base * config.decay ** (epoch // config.decay_every)


def _finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise DivergedLoss(f"{what} became non-finite")
    return value


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def fit_generator(generator: ToyGenerator, data: ToyPairs, epochs: int, config: TrainConfig,
                  rng: np.random.Generator, learning_rate: Optional[float] = None,
                  discriminator=None, lambda_rl: float = 0.0,
                  sample_rng: Optional[np.random.Generator] = None, history: Optional[list] = None) -> ToyGenerator:
    """Minibatch descent on the captioning loss, optionally with the
    discriminator reward term (phase 3).

    Batches are drawn over labeled pairs; when the reward is active each batch
    also takes an equal share of the unlabeled pairs.  With ``lambda_rl == 0``
    no extra random numbers are consumed, so the run matches a plain phase-1
    continuation exactly.
    """
    lr0 = config.learning_rate if learning_rate is None else learning_rate
    theta = generator.theta.copy()
    labeled = data.labeled
    rl = discriminator is not None and lambda_rl != 0
    for epoch in range(epochs):
        lr = _lr(lr0, epoch, config)
        batches = _batches(len(labeled), config.batch_size, rng)
        if rl:
            u_order = rng.permutation(len(data.unlabeled_x))
            u_chunks = np.array_split(u_order, len(batches))
        epoch_loss = 0.0
        for b, idx in enumerate(batches):
            v, grad = generator.batch_loss_and_grad([data.labeled_w[i] for i in idx], data.labeled_x[idx],
                                                    config.lambda_attn, config.mu_entropy, theta)
            epoch_loss += v
            if rl:
                xs = np.concatenate([data.labeled_x[idx], data.unlabeled_x[u_chunks[b]]])
                w_hat = generator.sample_batch(xs, sample_rng, theta)
                rewards = np.log(discriminator.probs([tuple(w) for w in w_hat], xs))
                grad -= lambda_rl * generator.weighted_score_grad(w_hat, xs, rewards, theta)
            theta = theta - lr * grad / len(idx)
        _finite(epoch_loss, "generator loss")
        if not np.all(np.isfinite(theta)):
            raise DivergedLoss("generator parameters became non-finite")
        if history is not None:
            history.append(epoch_loss)
    return generator.copy(theta)


def _phase2_examples(data: ToyPairs, rng: np.random.Generator):
    """Positives, one mismatched labeled caption per labeled pair, and one
    labeled caption per unlabeled pair.

    A mismatch is redrawn until its caption differs from the pair's own, since
    an identical caption is certainly valid for that pair.
    """
    L = len(data.labeled_w)
    pos = (data.labeled_w, data.labeled_x)
    neg_caps, neg_x = [], []
    for i in range(L):
        for _ in range(100):
            j = int(rng.integers(L))
            if j != i and data.labeled_w[j] != data.labeled_w[i]:
                neg_caps.append(data.labeled_w[j])
                neg_x.append(data.labeled_x[i])
                break
    for u in range(len(data.unlabeled_x)):
        neg_caps.append(data.labeled_w[int(rng.integers(L))])
        neg_x.append(data.unlabeled_x[u])
    return pos, (neg_caps, np.array(neg_x).reshape(-1, data.feature_dim))


def fit_discriminator(discriminator: ToyDiscriminator, data: ToyPairs, epochs: int, config: TrainConfig,
                      rng: np.random.Generator, history: Optional[list] = None) -> ToyDiscriminator:
    theta = discriminator.theta.copy()
    for epoch in range(epochs):
        lr = _lr(config.learning_rate, epoch, config)
        (pc, px), (nc, nx) = _phase2_examples(data, rng)
        caps = list(pc) + list(nc)
        xs = np.concatenate([px, nx])
        labels = np.concatenate([np.ones(len(pc)), np.zeros(len(nc))])
        epoch_loss = 0.0
        for idx in _batches(len(caps), config.batch_size, rng):
            p_idx = idx[labels[idx] == 1]
            n_idx = idx[labels[idx] == 0]
            v, g = discriminator.loss_and_grad(([caps[i] for i in p_idx], xs[p_idx]),
                                               ([caps[i] for i in n_idx], xs[n_idx]), theta)
            epoch_loss += v
            theta = theta - lr * g / len(idx)
        _finite(epoch_loss, "discriminator loss")
        if history is not None:
            history.append(epoch_loss)
    return discriminator.copy(theta)


def train_phases(data: ToyPairs, config: TrainConfig = TrainConfig(),
                 history: Optional[TrainHistory] = None) -> tuple[ToyGenerator, ToyDiscriminator]:
    """Run all three phases; the discriminator stays frozen during phase 3."""
    if len(data.labeled_w) == 0:
        raise ValueError("training needs at least one labeled pair")
    history = TrainHistory() if history is None else history
    seeds = np.random.SeedSequence(config.seed).spawn(5)
    rng_g, rng_d, rng_3, rng_s, init = (np.random.default_rng(s) for s in seeds)
    init_seed = int(init.integers(2**32))
    gen = ToyGenerator(data.vocab_size, data.feature_dim, config.hidden_dim, config.spatial_dim,
                       data.caption_length, seed=init_seed)
    disc = ToyDiscriminator(data.vocab_size, data.feature_dim, config.embed_dim, seed=init_seed + 1)

    gen = fit_generator(gen, data, config.epochs_generator, config, rng_g, history=history.generator)
    disc = fit_discriminator(disc, data, config.epochs_discriminator, config, rng_d, history=history.discriminator)

    frozen = disc.copy()
    track = lambda g: expected_phase3_loss(g, data.labeled, data.unlabeled_x, frozen, config.lambda_rl,
                                           config.lambda_attn, config.mu_entropy)
    history.phase3.append(track(gen))
    for epoch in range(config.epochs_phase3):
        # one epoch per call so the tracked loss is recorded; the decayed rate is passed in explicitly
        gen = fit_generator(gen, data, 1, config, rng_3, learning_rate=_lr(config.learning_rate_phase3, epoch, config),
                            discriminator=frozen, lambda_rl=config.lambda_rl, sample_rng=rng_s)
        history.phase3.append(_finite(track(gen), "phase-3 loss"))
    return gen, disc


def discriminator_accuracy(discriminator: ToyDiscriminator, data: ToyPairs, seed: int = 0) -> float:
    """Accuracy at threshold 0.5 on every labeled positive and, for each, one
    caption drawn from the other captions in the vocabulary of the data."""
    rng = np.random.default_rng(seed)
    distinct = sorted(set(data.labeled_w))
    caps, xs, labels = [], [], []
    for x, w in data.labeled:
        caps.append(w)
        xs.append(x)
        labels.append(1)
        others = [c for c in distinct if c != w]
        caps.append(others[int(rng.integers(len(others)))])
        xs.append(x)
        labels.append(0)
    probs = discriminator.probs(caps, np.array(xs))
    return float(np.mean((probs > 0.5) == np.array(labels, dtype=bool)))


def fit_image_only(data: ToyPairs, epochs: int = 40, config: TrainConfig = TrainConfig(),
                   seed: int = 0) -> ToyImageOnlyDetector:
    """Binary no-change classifier on pair features alone (label 1 = no change).
    Unlabeled pairs straddle a known changepoint, so they count as changes."""
    rng = np.random.default_rng(seed)
    det = ToyImageOnlyDetector(data.feature_dim, config.hidden_dim, seed=int(rng.integers(2**32)))
    xs = np.concatenate([data.labeled_x, data.unlabeled_x])
    ys = np.concatenate([(data.labeled_type == 0).astype(float), np.zeros(len(data.unlabeled_x))])
    theta = det.theta.copy()
    for epoch in range(epochs):
        lr = _lr(config.learning_rate, epoch, config)
        for idx in _batches(len(xs), config.batch_size, rng):
            v, g = det.loss_and_grad(xs[idx], ys[idx], theta)
            _finite(v, "image-only loss")
            theta = theta - lr * g / len(idx)
    return ToyImageOnlyDetector(data.feature_dim, config.hidden_dim, theta)


# ---------------------------------------------------------------------------
# stat tables from trained models
# ---------------------------------------------------------------------------

def language_stat_table(features: np.ndarray, discriminator: ToyDiscriminator,
                        generator: ToyGenerator) -> StatTable:
    """``p`` = negated discriminator score of "no change"; ``h`` = generator
    hidden state."""
    n = features.shape[0]
    iu, ju = np.triu_indices(n, 1)
    xs = features[iu, ju]
    p = np.zeros((n, n))
    p[iu, ju] = -discriminator.probs([NO_CHANGE] * len(xs), xs)
    h = np.zeros((n, n, generator.hidden_dim))
    h[iu, ju] = np.tanh(xs @ generator.layout.unpack(generator.theta)["U"].T)
    return StatTable.from_arrays(p, h)


def image_only_stat_table(features: np.ndarray, detector: ToyImageOnlyDetector) -> StatTable:
    n = features.shape[0]
    iu, ju = np.triu_indices(n, 1)
    xs = features[iu, ju]
    p = np.zeros((n, n))
    p[iu, ju] = -detector.probs(xs)
    h = np.zeros((n, n, detector.hidden_dim))
    h[iu, ju] = detector.penultimate(xs)
    return StatTable.from_arrays(p, h)
