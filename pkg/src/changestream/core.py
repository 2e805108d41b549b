"""Domain types shared across the package.

Frames are opaque indices ``0..N-1``.  A changepoint ``kappa`` is the index of
the first post-change frame: frames ``0..kappa-1`` come before the change and
``kappa..N-1`` after it.  Pairwise quantities are stored only for ``t < t'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

class ChangeStreamError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ChangeStreamError, ValueError):
    """Input is well-formed but violates a contract."""


class MissingPair(ValidationError):
    def __init__(self, t: int, t_prime: int):
        self.t, self.t_prime = t, t_prime
        super().__init__(f"missing pair ({t}, {t_prime})")


class DimensionMismatch(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class InvalidChangepoint(ValidationError):
    pass


class MissingRepresentations(ValidationError):
    pass


class MissingChangepoint(ValidationError):
    pass


class MissingCaption(ValidationError):
    pass


class StreamMismatch(ValidationError):
    pass


class EmptyTruthSet(ValidationError):
    pass


class NonDistributionAttention(ValidationError):
    pass


class ScoreOutOfRange(ValidationError):
    pass


class ParseError(ChangeStreamError):
    """A file could not be parsed into the expected structure."""


class DuplicateStream(ParseError):
    pass


class DivergedLoss(ChangeStreamError, ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

#: reserved caption meaning "no change"; token id 0
NO_CHANGE: tuple[int, ...] = (0,)

METHODS = ("step", "gc", "rc", "step-io", "gc-io", "rc-io", "rc-lambda0")


class PairKey(NamedTuple):
    t: int
    t_prime: int


@dataclass(frozen=True)
class StreamManifest:
    stream_id: str
    num_frames: int
    true_changepoint: Optional[int] = None
    captions: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.num_frames < 2:
            raise ValidationError(f"{self.stream_id}: num_frames must be >= 2, got {self.num_frames}")
        k = self.true_changepoint
        if k is not None and not 1 <= k <= self.num_frames - 1:
            raise InvalidChangepoint(
                f"{self.stream_id}: changepoint {k} outside 1..{self.num_frames - 1}")
        object.__setattr__(self, "captions", tuple(tuple(int(x) for x in c) for c in self.captions))


@dataclass(frozen=True)
class PairObservation:
    key: PairKey
    p: float
    h: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GroundTruth:
    stream_id: str
    kappa_star: Optional[int] = None


@dataclass(frozen=True)
class DetectionResult:
    stream_id: str
    method: str
    kappa_hat: int
    confidence: float
    profile: tuple[float, ...] = field(default=(), compare=False)


def pair_keys(num_frames: int) -> list[PairKey]:
    """All keys of the complete pair graph, sorted by ``(t, t')``."""
    return [PairKey(t, u) for t in range(num_frames) for u in range(t + 1, num_frames)]


def num_pairs(num_frames: int) -> int:
    return num_frames * (num_frames - 1) // 2


@dataclass(frozen=True, eq=False)
class StatTable:
    """Pairwise change statistics ``p`` and optional representations ``h``.

    ``observations`` maps each :class:`PairKey` to its :class:`PairObservation`.
    The dense views :attr:`p_matrix` and :attr:`h_array` are built on first use
    and require a valid table.
    """

    num_frames: int
    observations: Mapping[PairKey, PairObservation]
    rep_dim: Optional[int] = None

    @classmethod
    def from_arrays(cls, p: np.ndarray, h: Optional[np.ndarray] = None) -> "StatTable":
        """Build a table from an ``(N, N)`` statistic matrix and optional ``(N, N, d)``
        representations; only the strict upper triangle is read."""
        p = np.asarray(p, dtype=float)
        n = p.shape[0]
        if p.shape != (n, n):
            raise DimensionMismatch(f"p must be square, got shape {p.shape}")
        iu, ju = np.triu_indices(n, 1)
        if h is not None:
            h = np.asarray(h, dtype=float)
            if h.ndim != 3 or h.shape[:2] != (n, n):
                raise DimensionMismatch(f"h must have shape (N, N, d), got {h.shape}")
            obs = {PairKey(int(t), int(u)): PairObservation(PairKey(int(t), int(u)), float(p[t, u]), h[t, u].copy())
                   for t, u in zip(iu, ju)}
            rep_dim = h.shape[2]
        else:
            obs = {PairKey(int(t), int(u)): PairObservation(PairKey(int(t), int(u)), float(p[t, u]))
                   for t, u in zip(iu, ju)}
            rep_dim = None
        table = cls(n, obs, rep_dim)
        # seed the dense caches with upper-triangle-only copies
        dense_p = np.zeros((n, n))
        dense_p[iu, ju] = p[iu, ju]
        table.__dict__["p_matrix"] = dense_p
        if h is not None:
            dense_h = np.zeros_like(h)
            dense_h[iu, ju] = h[iu, ju]
            table.__dict__["h_array"] = dense_h
        return table

    @property
    def has_representations(self) -> bool:
        return self.rep_dim is not None and self.rep_dim > 0

    @cached_property
    def p_matrix(self) -> np.ndarray:
        """``(N, N)`` array with ``p`` on the strict upper triangle, zeros elsewhere."""
        out = np.zeros((self.num_frames, self.num_frames))
        for (t, u), ob in self.observations.items():
            out[t, u] = ob.p
        return out

    @cached_property
    def h_array(self) -> np.ndarray:
        if not self.has_representations:
            raise MissingRepresentations("table carries no hidden representations")
        out = np.zeros((self.num_frames, self.num_frames, self.rep_dim))
        for (t, u), ob in self.observations.items():
            out[t, u] = ob.h
        return out

    def p(self, t: int, t_prime: int) -> float:
        return self.observations[PairKey(t, t_prime)].p

    def __eq__(self, other):
        if not isinstance(other, StatTable):
            return NotImplemented
        if (self.num_frames, self.rep_dim) != (other.num_frames, other.rep_dim):
            return False
        if self.observations.keys() != other.observations.keys():
            return False
        for k, a in self.observations.items():
            b = other.observations[k]
            if a.p != b.p:
                return False
            if (a.h is None) != (b.h is None):
                return False
            if a.h is not None and not np.array_equal(a.h, b.h):
                return False
        return True

    __hash__ = None


def validate_stat_table(table: StatTable) -> None:
    """Raise unless ``table`` holds exactly the full upper triangle with finite
    values and representations of one shared, positive-norm dimension."""
    n = table.num_frames
    if n < 2:
        raise ValidationError(f"num_frames must be >= 2, got {n}")
    expected = set(pair_keys(n))
    for key in table.observations:
        if key not in expected:
            raise ValidationError(f"pair {tuple(key)} is not in the upper triangle for N={n}")
    for key in pair_keys(n):
        if key not in table.observations:
            raise MissingPair(*key)

    dims = set()
    for key, ob in table.observations.items():
        if ob.key != key:
            raise ValidationError(f"observation keyed {tuple(key)} carries key {tuple(ob.key)}")
        if not math.isfinite(ob.p):
            raise NonFiniteValue(f"p{tuple(key)} = {ob.p}")
        if ob.h is not None:
            h = np.asarray(ob.h)
            if h.ndim != 1 or h.size < 1:
                raise DimensionMismatch(f"h{tuple(key)} must be a non-empty vector")
            if not np.all(np.isfinite(h)):
                raise NonFiniteValue(f"h{tuple(key)} has non-finite entries")
            if not np.any(h != 0):
                raise ValidationError(f"h{tuple(key)} has zero norm")
            dims.add(h.size)
        else:
            dims.add(None)

    if len(dims) > 1:
        seen = sorted(d for d in dims if d is not None)
        detail = "some pairs lack h" if None in dims else f"dimensions {seen}"
        raise DimensionMismatch(f"inconsistent representations: {detail}")
    (d,) = dims
    if table.rep_dim not in (None, 0) and d != table.rep_dim:
        raise DimensionMismatch(f"rep_dim={table.rep_dim} but vectors have dimension {d}")
    if d is not None and table.rep_dim is None:
        raise DimensionMismatch(f"vectors have dimension {d} but rep_dim is unset")


def make_stat_table(num_frames: int, observations: Iterable[PairObservation],
                    rep_dim: Optional[int] = None) -> StatTable:
    """Assemble and validate a table from observation records."""
    obs: dict[PairKey, PairObservation] = {}
    for ob in observations:
        key = PairKey(int(ob.key[0]), int(ob.key[1]))
        h = None if ob.h is None else np.asarray(ob.h, dtype=float)
        obs[key] = PairObservation(key, float(ob.p), h)
    if rep_dim is None:
        dims = {o.h.size for o in obs.values() if o.h is not None}
        rep_dim = min(dims) if dims else None
    table = StatTable(num_frames, dict(sorted(obs.items())), rep_dim)
    validate_stat_table(table)
    return table


def check_changepoint(num_frames: int, kappa: int) -> None:
    if not (isinstance(kappa, (int, np.integer)) and 1 <= kappa <= num_frames - 1):
        raise InvalidChangepoint(f"candidate {kappa!r} outside 1..{num_frames - 1}")


def straddles(key: Sequence[int], kappa: int) -> bool:
    """True if the pair crosses the changepoint, ``t < kappa <= t'``."""
    return key[0] < kappa <= key[1]
