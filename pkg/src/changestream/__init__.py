"""Changepoint detection and description for image streams.

Pairwise frame statistics are scored by candidate partitions (step, graph cut,
representation consistency); detections are evaluated with windowed average
precision.  The :mod:`changestream.description` subpackage holds the toy
captioning objectives whose outputs feed those statistics.
"""

from .core import (
    METHODS,
    NO_CHANGE,
    ChangeStreamError,
    DetectionResult,
    DimensionMismatch,
    DivergedLoss,
    DuplicateStream,
    EmptyTruthSet,
    GroundTruth,
    InvalidChangepoint,
    MissingCaption,
    MissingChangepoint,
    MissingPair,
    MissingRepresentations,
    NonDistributionAttention,
    NonFiniteValue,
    PairKey,
    PairObservation,
    ParseError,
    ScoreOutOfRange,
    StatTable,
    StreamManifest,
    StreamMismatch,
    ValidationError,
    make_stat_table,
    pair_keys,
    validate_stat_table,
)
from .detectors import (
    LAMBDA_RC,
    RcParams,
    consistency_score,
    cut_partition,
    detect,
    detect_incremental,
    gc_score,
    incremental_profile,
    rc_score,
    score_profile,
    step_score,
)
from .evaluation import EvalReport, average_precision, evaluate_methods, map_over_windows, pr_curve, windowed_correct
from .pair_mining import LabeledPair, MinedPairs, mine, mine_annotated, mine_no_change, mine_unannotated
from .simulator import SimConfig, simulate_benchmark, simulate_stream

__version__ = "0.1.0"
