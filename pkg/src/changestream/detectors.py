"""Changepoint scores over a complete pair graph and their argmax estimators.

For a candidate ``kappa`` the cut edges are the pairs ``t < kappa <= t'``
(the block ``[:kappa, kappa:]`` of the upper-triangular statistic matrix); the
complement holds every same-side pair.

* step: ``p(kappa-1, kappa)``
* gc: mean of ``p`` over cut edges minus mean over the complement
* consistency: mean cosine similarity over ordered pairs of distinct cut edges
* rc: ``lambda_rc * gc + consistency``

:func:`detect` re-sums each candidate from scratch.  :func:`detect_incremental`
walks ``kappa`` upward keeping running sums of ``p`` and of unit
representations, touching ``O(N)`` edges per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DetectionResult,
    MissingRepresentations,
    PairKey,
    StatTable,
    ValidationError,
    check_changepoint,
    num_pairs,
)

LAMBDA_RC = 1.25
TIE_TOLERANCE = 1e-12

#: CLI spellings accepted in addition to the canonical method names
METHOD_ALIASES = {"rc0": "rc-lambda0"}


@dataclass(frozen=True)
class CutPartition:
    kappa: int
    cut_edges: tuple[PairKey, ...]
    complement_edges: tuple[PairKey, ...]


@dataclass(frozen=True)
class RcParams:
    lambda_rc: float = LAMBDA_RC

    def __post_init__(self):
        if not np.isfinite(self.lambda_rc) or self.lambda_rc < 0:
            raise ValidationError(f"lambda_rc must be finite and >= 0, got {self.lambda_rc}")


def cut_partition(num_frames: int, kappa: int) -> CutPartition:
    check_changepoint(num_frames, kappa)
    cut, rest = [], []
    for t in range(num_frames):
        for u in range(t + 1, num_frames):
            (cut if t < kappa <= u else rest).append(PairKey(t, u))
    return CutPartition(kappa, tuple(cut), tuple(rest))


# ---------------------------------------------------------------------------
# naive scores: every candidate summed from scratch
# ---------------------------------------------------------------------------

def _unit_reps(table: StatTable) -> np.ndarray:
    if not table.has_representations:
        raise MissingRepresentations("consistency needs hidden representations; table has none")
    h = table.h_array
    norms = np.linalg.norm(h, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norms > 0, h / np.where(norms > 0, norms, 1.0), 0.0)


def _difference_of_means(cut_sum, cut_count, rest_sum, rest_count):
    # one combined fraction: shifting every p by c cancels exactly whenever the sums are exact
    if rest_count == 0:
        return cut_sum / cut_count
    return (rest_count * cut_sum - cut_count * rest_sum) / (cut_count * rest_count)


def step_score(table: StatTable, kappa: int) -> float:
    check_changepoint(table.num_frames, kappa)
    return float(table.p_matrix[kappa - 1, kappa])


def _gc_from_matrix(p: np.ndarray, kappa: int) -> float:
    n = p.shape[0]
    cut = p[:kappa, kappa:]
    rest = np.concatenate([p[:kappa, :kappa][np.triu_indices(kappa, 1)],
                           p[kappa:, kappa:][np.triu_indices(n - kappa, 1)]])
    return float(_difference_of_means(cut.sum(), cut.size, rest.sum(), rest.size))


def _consistency_from_unit(unit: np.ndarray, kappa: int, average: bool = True) -> float:
    block = unit[:kappa, kappa:].reshape(-1, unit.shape[-1])
    s = block.sum(axis=0)
    sq = float(s @ s)
    if not average:
        return sq
    m = block.shape[0]
    if m == 1:
        return 1.0
    return (sq - m) / (m * (m - 1))


def gc_score(table: StatTable, kappa: int) -> float:
    check_changepoint(table.num_frames, kappa)
    return _gc_from_matrix(table.p_matrix, kappa)


def consistency_score(table: StatTable, kappa: int, average: bool = True) -> float:
    """Average cosine similarity over ordered pairs of distinct cut edges.

    Uses ``sum_{e != e'} cos = |sum_e h_e/|h_e||^2 - |E|``.  A single cut edge
    scores 1.0.  With ``average=False`` returns the unnormalized sum over all
    ordered pairs, self-pairs included (``|sum_e h_e/|h_e||^2``).
    """
    check_changepoint(table.num_frames, kappa)
    return _consistency_from_unit(_unit_reps(table), kappa, average)


def rc_score(table: StatTable, kappa: int, params: RcParams = RcParams()) -> float:
    return params.lambda_rc * gc_score(table, kappa) + consistency_score(table, kappa)


def _canonical(method: str) -> str:
    method = METHOD_ALIASES.get(method, method)
    if method not in ("step", "gc", "rc", "rc-lambda0", "step-io", "gc-io", "rc-io"):
        raise ValidationError(f"unknown method {method!r}")
    return method


def _base(method: str) -> str:
    return method[:-3] if method.endswith("-io") else method


def argmax_first(profile: np.ndarray) -> int:
    """Index of the first score within ``TIE_TOLERANCE * max(1, |best|)`` of the
    best, so rounding noise never moves the estimate off the smallest tied kappa."""
    profile = np.asarray(profile, dtype=float)
    best = float(profile.max())
    return int(np.flatnonzero(profile >= best - TIE_TOLERANCE * max(1.0, abs(best)))[0])


def _result(stream_id: str, method: str, profile: np.ndarray) -> DetectionResult:
    i = argmax_first(profile)
    return DetectionResult(stream_id, method, i + 1, float(profile[i]),
                           tuple(float(v) for v in profile))


def score_profile(table: StatTable, method: str, params: RcParams = RcParams()) -> np.ndarray:
    """Scores for ``kappa = 1..N-1`` by direct re-summation."""
    base = _base(_canonical(method))
    ks = range(1, table.num_frames)
    if base == "step":
        return np.array([step_score(table, k) for k in ks])
    p = table.p_matrix
    if base == "gc":
        return np.array([_gc_from_matrix(p, k) for k in ks])
    unit = _unit_reps(table)
    if base == "rc-lambda0":
        return np.array([_consistency_from_unit(unit, k) for k in ks])
    return np.array([params.lambda_rc * _gc_from_matrix(p, k) + _consistency_from_unit(unit, k) for k in ks])


def detect(table: StatTable, method: str = "rc", params: RcParams = RcParams(),
           stream_id: str = "") -> DetectionResult:
    method = _canonical(method)
    return _result(stream_id, method, score_profile(table, method, params))


# ---------------------------------------------------------------------------
# incremental scores
# ---------------------------------------------------------------------------

def _running_cut_sums(x: np.ndarray) -> np.ndarray:
    """Cut sums of an upper-triangular ``x`` (extra trailing axes allowed) for
    ``kappa = 1..N-1``.

    Moving ``kappa -> kappa+1`` drops edges ``(t, kappa), t < kappa`` (column
    ``kappa`` above the diagonal) and adds ``(kappa, t'), t' > kappa`` (row
    ``kappa`` right of the diagonal).
    """
    col_above = x.sum(axis=0)
    row_right = x.sum(axis=1)
    first = row_right[0]
    deltas = row_right[1:-1] - col_above[1:-1]
    return np.concatenate([first[None, ...], first + np.cumsum(deltas, axis=0)], axis=0)


def incremental_profile(table: StatTable, method: str = "rc", params: RcParams = RcParams()) -> np.ndarray:
    base = _base(_canonical(method))
    n = table.num_frames
    p = table.p_matrix
    if base == "step":
        return np.diagonal(p, offset=1).copy()

    kappa = np.arange(1, n)
    cut_count = kappa * (n - kappa)
    rest_count = num_pairs(n) - cut_count
    parts = []
    if base in ("gc", "rc"):
        cut_p = _running_cut_sums(np.triu(p, 1))
        rest_p = np.triu(p, 1).sum() - cut_p
        with np.errstate(invalid="ignore", divide="ignore"):
            gc = np.where(rest_count == 0, cut_p / cut_count,
                          (rest_count * cut_p - cut_count * rest_p) / (cut_count * np.maximum(rest_count, 1)))
        if base == "gc":
            return gc
        parts.append(params.lambda_rc * gc)
    unit = _unit_reps(table)
    s = _running_cut_sums(unit)
    sq = np.einsum("kd,kd->k", s, s)
    with np.errstate(invalid="ignore", divide="ignore"):
        cons = np.where(cut_count == 1, 1.0, (sq - cut_count) / (cut_count * np.maximum(cut_count - 1, 1)))
    parts.append(cons)
    return sum(parts)


def detect_incremental(table: StatTable, method: str = "rc", params: RcParams = RcParams(),
                       stream_id: str = "") -> DetectionResult:
    method = _canonical(method)
    return _result(stream_id, method, incremental_profile(table, method, params))


def pairwise_cosine_mean(table: StatTable, kappa: int) -> float:
    """Double loop over ordered pairs of distinct cut edges; slow reference for
    :func:`consistency_score`."""
    if not table.has_representations:
        raise MissingRepresentations("table carries no hidden representations")
    part = cut_partition(table.num_frames, kappa)
    if len(part.cut_edges) == 1:
        return 1.0
    reps = [np.asarray(table.observations[e].h, dtype=float) for e in part.cut_edges]
    total, count = 0.0, 0
    for i, a in enumerate(reps):
        for j, b in enumerate(reps):
            if i != j:
                total += float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
                count += 1
    return total / count

