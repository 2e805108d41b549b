"""Turn streams with a known changepoint into training pairs.

Same-side pairs are labeled with the reserved "no change" caption.  Pairs that
straddle the changepoint get the stream's change caption when one exists and
are left unlabeled otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    NO_CHANGE,
    MissingCaption,
    MissingChangepoint,
    PairKey,
    StreamManifest,
    ValidationError,
    pair_keys,
)


@dataclass(frozen=True)
class LabeledPair:
    key: PairKey
    caption: tuple[int, ...]


@dataclass(frozen=True)
class MinedPairs:
    labeled: tuple[LabeledPair, ...]
    unlabeled: tuple[PairKey, ...]

    def no_change_pairs(self) -> list[PairKey]:
        return [lp.key for lp in self.labeled if lp.caption == NO_CHANGE]

    def change_pairs(self) -> list[LabeledPair]:
        return [lp for lp in self.labeled if lp.caption != NO_CHANGE]


def _reversed(manifest: StreamManifest) -> StreamManifest:
    # frame i plays the role of frame N-1-i; the change now sits before frame N-kappa
    k = manifest.true_changepoint
    return StreamManifest(manifest.stream_id, manifest.num_frames,
                          None if k is None else manifest.num_frames - k, manifest.captions)


def mine_annotated(manifest: StreamManifest, reverse: bool = False) -> MinedPairs:
    """Straddling pairs get every caption (one copy per caption); same-side
    pairs get "no change"."""
    if manifest.true_changepoint is None:
        raise MissingChangepoint(f"{manifest.stream_id}: annotated mining needs a changepoint")
    if not manifest.captions:
        raise MissingCaption(f"{manifest.stream_id}: annotated mining needs at least one caption")
    if any(c == NO_CHANGE for c in manifest.captions):
        raise ValidationError(f"{manifest.stream_id}: change caption equals the reserved no-change caption")
    if reverse:
        manifest = _reversed(manifest)
    k = manifest.true_changepoint
    labeled = []
    for key in pair_keys(manifest.num_frames):
        if key.t < k <= key.t_prime:
            labeled.extend(LabeledPair(key, c) for c in manifest.captions)
        else:
            labeled.append(LabeledPair(key, NO_CHANGE))
    return MinedPairs(tuple(labeled), ())


def mine_unannotated(manifest: StreamManifest, reverse: bool = False) -> MinedPairs:
    if manifest.true_changepoint is None:
        raise MissingChangepoint(f"{manifest.stream_id}: mining needs a changepoint")
    if reverse:
        manifest = _reversed(manifest)
    k = manifest.true_changepoint
    labeled, unlabeled = [], []
    for key in pair_keys(manifest.num_frames):
        if key.t < k <= key.t_prime:
            unlabeled.append(key)
        else:
            labeled.append(LabeledPair(key, NO_CHANGE))
    return MinedPairs(tuple(labeled), tuple(unlabeled))


def mine_no_change(manifest: StreamManifest) -> MinedPairs:
    return MinedPairs(tuple(LabeledPair(key, NO_CHANGE) for key in pair_keys(manifest.num_frames)), ())


def mine(manifest: StreamManifest, reverse: bool = False) -> MinedPairs:
    """Pick the mining rule that fits what the manifest carries."""
    if manifest.true_changepoint is None:
        return mine_no_change(manifest)
    if manifest.captions:
        return mine_annotated(manifest, reverse)
    return mine_unannotated(manifest, reverse)
