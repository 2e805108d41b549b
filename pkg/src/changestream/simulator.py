"""Synthetic stat tables with known changepoints.

Every stream draws from its own Philox generator keyed by
``hash64(seed, stream_index)`` (SplitMix64 finalizer, below), so any stream
can be regenerated alone, in any order, on any platform.  Within a stream the
draw order is fixed:

1. ``u``: ``d`` standard normals, normalized (the change direction);
2. ``z``: one standard normal per pair, pairs in ``(t, t')`` order;
3. ``eps``: a ``(pairs, d)`` block of standard normals, same pair order.

Straddling pairs (``t < kappa <= t'``) get ``p = mu_change + sigma_p * z`` and
``h = normalize(u + sigma_h * eps)``; all other pairs get
``p = mu_nochange + sigma_p * z`` and ``h = normalize(eps)``.  Streams without
a change use the second form everywhere.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GroundTruth, InvalidChangepoint, StatTable, ValidationError

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def hash64(seed: int, index: int) -> int:
    """Stream seed for stream ``index`` of a benchmark seeded with ``seed``."""
    return splitmix64((splitmix64(seed & _MASK64) + index) & _MASK64)


@dataclass(frozen=True)
class SimConfig:
    num_streams: int = 400
    num_frames: int = 10
    candidates: tuple[int, ...] = tuple(range(1, 9))
    no_change_streams: int = 400
    rep_dim: int = 16
    mu_change: float = 1.0
    mu_nochange: float = 0.0
    sigma_p: float = 0.0
    sigma_h: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(sorted(set(int(c) for c in self.candidates))))
        if self.num_frames < 2:
            raise ValidationError("num_frames must be >= 2")
        if not self.mu_change > self.mu_nochange:
            raise ValidationError("mu_change must exceed mu_nochange")
        if self.sigma_p < 0 or self.sigma_h < 0:
            raise ValidationError("noise scales must be non-negative")
        if self.rep_dim < 1:
            raise ValidationError("rep_dim must be >= 1")
        if self.num_streams < 0 or self.no_change_streams < 0:
            raise ValidationError("stream counts must be non-negative")
        for c in self.candidates:
            if not 1 <= c <= self.num_frames - 1:
                raise InvalidChangepoint(f"candidate {c} outside 1..{self.num_frames - 1}")


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def simulate_stream(config: SimConfig, kappa_star: Optional[int], stream_seed: int,
                    stream_id: str = "") -> tuple[StatTable, GroundTruth]:
    n, d = config.num_frames, config.rep_dim
    if kappa_star is not None and kappa_star not in config.candidates:
        raise InvalidChangepoint(f"changepoint {kappa_star} not among candidates {config.candidates}")
    rng = np.random.Generator(np.random.Philox(key=stream_seed & _MASK64))

    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    iu, ju = np.triu_indices(n, 1)
    z = rng.standard_normal(iu.size)
    eps = rng.standard_normal((iu.size, d))

    if kappa_star is None:
        cross = np.zeros(iu.size, dtype=bool)
    else:
        cross = (iu < kappa_star) & (kappa_star <= ju)
    p_vals = np.where(cross, config.mu_change, config.mu_nochange) + config.sigma_p * z
    h_vals = np.where(cross[:, None], u + config.sigma_h * eps, eps)
    h_vals = _normalize_rows(h_vals)

    p = np.zeros((n, n))
    p[iu, ju] = p_vals
    h = np.zeros((n, n, d))
    h[iu, ju] = h_vals
    return StatTable.from_arrays(p, h), GroundTruth(stream_id, kappa_star)


def stream_plan(config: SimConfig) -> list[tuple[str, Optional[int]]]:
    """``(stream_id, kappa_star)`` for every stream, in generation order.

    Change streams come first, grouped by candidate; no-change streams last.
    The position in this list is the ``index`` fed to :func:`hash64`.
    """
    kappas: list[Optional[int]] = [k for k in config.candidates for _ in range(config.num_streams)]
    kappas += [None] * config.no_change_streams
    width = max(5, len(str(len(kappas))))
    return [(f"s{i:0{width}d}", k) for i, k in enumerate(kappas)]


def _simulate_one(args):
    config, index, sid, kappa = args
    return simulate_stream(config, kappa, hash64(config.seed, index), sid)


def simulate_benchmark(config: SimConfig, workers: int = 1) -> list[tuple[StatTable, GroundTruth]]:
    """Generate every stream of the benchmark; ``workers > 1`` uses processes
    and yields exactly the serial output."""
    jobs = [(config, i, sid, k) for i, (sid, k) in enumerate(stream_plan(config))]
    if workers <= 1 or len(jobs) < 2:
        return [_simulate_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
