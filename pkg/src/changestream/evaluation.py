"""Precision-recall over per-stream detections, 11-point AP and mAP.

A detection fires when its confidence clears the threshold; it is correct when
its stream has a changepoint and ``|kappa_hat - kappa_star| <= window``.
Recall is taken over the streams that really contain a change, so detections
on no-change streams only ever cost precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import DetectionResult, EmptyTruthSet, GroundTruth, StreamMismatch, ValidationError

RECALL_GRID = np.linspace(0.0, 1.0, 11)
WINDOWS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class EvalReport:
    pr_points: dict[int, list[tuple[float, float]]]
    ap_per_window: dict[int, float]
    map_value: float


def windowed_correct(detection: DetectionResult, truth: GroundTruth, window: int) -> bool:
    if detection.stream_id != truth.stream_id:
        raise StreamMismatch(f"detection for {detection.stream_id!r} scored against {truth.stream_id!r}")
    if window < 0:
        raise ValidationError(f"window must be >= 0, got {window}")
    return truth.kappa_star is not None and abs(detection.kappa_hat - truth.kappa_star) <= window


def _paired(detections: Sequence[DetectionResult], truths: Sequence[GroundTruth]):
    by_id = {g.stream_id: g for g in truths}
    seen = set()
    for d in detections:
        if d.stream_id not in by_id:
            raise StreamMismatch(f"no ground truth for stream {d.stream_id!r}")
        if d.stream_id in seen:
            raise StreamMismatch(f"more than one detection for stream {d.stream_id!r}")
        seen.add(d.stream_id)
    missing = by_id.keys() - seen
    if missing:
        raise StreamMismatch(f"no detection for streams {sorted(missing)[:5]}")
    return [(d, by_id[d.stream_id]) for d in detections]


def pr_curve(detections: Sequence[DetectionResult], truths: Sequence[GroundTruth],
             window: int = 0) -> list[tuple[float, float]]:
    """``(recall, precision)`` at each distinct confidence, highest first.

    Detections sharing a confidence enter the fired set together.
    """
    pairs = _paired(detections, truths)
    positives = sum(g.kappa_star is not None for g in truths)
    if positives == 0:
        raise EmptyTruthSet("recall is undefined: no stream has a changepoint")
    conf = np.array([d.confidence for d, _ in pairs], dtype=float)
    hit = np.array([windowed_correct(d, g, window) for d, g in pairs], dtype=float)
    order = np.argsort(-conf, kind="stable")
    conf, hit = conf[order], hit[order]
    fired = np.arange(1, conf.size + 1)
    correct = np.cumsum(hit)
    # last index of every run of equal confidences
    ends = np.flatnonzero(np.append(conf[1:] != conf[:-1], True))
    return [(float(correct[i] / positives), float(correct[i] / fired[i])) for i in ends]


def average_precision(pr_points: Sequence[tuple[float, float]]) -> float:
    """Mean interpolated precision on recall 0.0, 0.1, ..., 1.0, times 100."""
    if len(pr_points) == 0:
        raise ValidationError("empty precision-recall curve")
    rec = np.array([r for r, _ in pr_points])
    prec = np.array([p for _, p in pr_points])
    total = 0.0
    for r in RECALL_GRID:
        # tolerance guards grid points like 0.3 against k/n rounding
        reachable = prec[rec >= r - 1e-12]
        total += float(reachable.max()) if reachable.size else 0.0
    return 100.0 * total / RECALL_GRID.size


def map_over_windows(detections: Sequence[DetectionResult], truths: Sequence[GroundTruth],
                     windows: Iterable[int] = WINDOWS) -> EvalReport:
    windows = list(windows)
    curves = {w: pr_curve(detections, truths, w) for w in windows}
    aps = {w: average_precision(c) for w, c in curves.items()}
    return EvalReport(curves, aps, float(np.mean(list(aps.values()))))


def evaluate_methods(detections: Sequence[DetectionResult], truths: Sequence[GroundTruth],
                     windows: Iterable[int] = WINDOWS) -> dict[str, EvalReport]:
    """One report per method found among ``detections``."""
    windows = list(windows)
    methods = sorted({d.method for d in detections})
    return {m: map_over_windows([d for d in detections if d.method == m], truths, windows) for m in methods}
