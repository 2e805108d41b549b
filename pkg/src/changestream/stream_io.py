"""Reading and writing stat tables, ground truth, detections and manifests.

Stat tables are JSON (``schema_version`` 1); tabular outputs are CSV with
``\\n`` line endings so files are byte-stable across platforms.  Floats are
written with ``repr``, the shortest string that parses back to the same
double, so save/load is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    ChangeStreamError,
    DetectionResult,
    DuplicateStream,
    GroundTruth,
    PairKey,
    PairObservation,
    ParseError,
    StatTable,
    StreamManifest,
    make_stat_table,
    validate_stat_table,
)

SCHEMA_VERSION = 1


class FileValidationError(ChangeStreamError):
    """Wraps a validation failure with the path of the file that caused it."""

    def __init__(self, path, cause: Exception):
        self.path, self.cause = Path(path), cause
        super().__init__(f"{path}: {type(cause).__name__}: {cause}")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# stat tables
# ---------------------------------------------------------------------------

def stat_table_to_dict(table: StatTable) -> dict:
    rep_dim = table.rep_dim if table.has_representations else 0
    records = []
    for key in sorted(table.observations):
        ob = table.observations[key]
        rec = {"t": key.t, "t_prime": key.t_prime, "p": float(ob.p)}
        if rep_dim:
            rec["h"] = [float(x) for x in ob.h]
        records.append(rec)
    return {"schema_version": SCHEMA_VERSION, "num_frames": table.num_frames,
            "rep_dim": rep_dim, "records": records}


def stat_table_from_dict(doc: dict) -> StatTable:
    try:
        version = doc["schema_version"]
        n = doc["num_frames"]
        rep_dim = doc.get("rep_dim", 0)
        records = doc["records"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing field {exc}") from None
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}")
    if not isinstance(n, int) or isinstance(n, bool) or not isinstance(rep_dim, int):
        raise ParseError("num_frames and rep_dim must be integers")
    if not isinstance(records, list):
        raise ParseError("records must be a list")

    obs = []
    seen = set()
    prev = None
    for i, rec in enumerate(records):
        try:
            key = PairKey(rec["t"], rec["t_prime"])
            p = rec["p"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"record {i}: missing field {exc}") from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in key):
            raise ParseError(f"record {i}: frame indices must be integers")
        if not isinstance(p, (int, float)) or isinstance(p, bool):
            raise ParseError(f"record {i}: p must be a number")
        if key in seen:
            raise ParseError(f"duplicate record {tuple(key)}")
        if prev is not None and key < prev:
            raise ParseError(f"records not sorted by (t, t_prime) at {tuple(key)}")
        seen.add(key)
        prev = key
        h = rec.get("h")
        if rep_dim:
            if h is None:
                raise ParseError(f"record {tuple(key)}: rep_dim={rep_dim} but h is absent")
            if not isinstance(h, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in h):
                raise ParseError(f"record {tuple(key)}: h must be a list of numbers")
            h = np.array(h, dtype=float)
        elif h is not None:
            raise ParseError(f"record {tuple(key)}: h present but rep_dim is 0")
        obs.append(PairObservation(key, float(p), h))
    return make_stat_table(n, obs, rep_dim or None)


def save_stat_table(table: StatTable, path) -> None:
    validate_stat_table(table)
    _write_text(path, json.dumps(stat_table_to_dict(table), separators=(",", ":")) + "\n")


def load_stat_table(path) -> StatTable:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        return stat_table_from_dict(doc)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except ChangeStreamError as exc:
        raise FileValidationError(path, exc) from exc


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_csv(path, header: Sequence[str]) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(header):
            raise ParseError(f"{path}: expected header {','.join(header)}, got {reader.fieldnames}")
        rows = []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise ParseError(f"{path}: line {reader.line_num}: wrong number of fields")
            rows.append(row)
        return rows


def _parse_int(text: str, what: str, path, line) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{path}: line {line}: {what} {text!r} is not an integer") from None


def load_ground_truth(path) -> list[GroundTruth]:
    out = []
    seen = set()
    for i, row in enumerate(_read_csv(path, ("stream_id", "kappa_star")), start=2):
        sid = row["stream_id"]
        if not sid:
            raise ParseError(f"{path}: line {i}: empty stream_id")
        if sid in seen:
            raise DuplicateStream(f"{path}: stream {sid!r} appears more than once")
        seen.add(sid)
        raw = row["kappa_star"].strip()
        kappa = _parse_int(raw, "kappa_star", path, i) if raw else None
        out.append(GroundTruth(sid, kappa))
    return out


def write_ground_truth(truths: Iterable[GroundTruth], path) -> None:
    rows = sorted(((g.stream_id, "" if g.kappa_star is None else g.kappa_star) for g in truths),
                  key=lambda r: r[0])
    _write_text(path, _csv_text(("stream_id", "kappa_star"), rows))


# ---------------------------------------------------------------------------
# detections
# ---------------------------------------------------------------------------

DETECTION_HEADER = ("stream_id", "method", "kappa_hat", "confidence")


def write_detections(results: Iterable[DetectionResult], path) -> None:
    rows = sorted(((r.stream_id, r.method, int(r.kappa_hat), repr(float(r.confidence))) for r in results),
                  key=lambda r: (r[0], r[1]))
    keys = [(r[0], r[1]) for r in rows]
    if len(set(keys)) != len(keys):
        raise ValueError("more than one detection for a (stream_id, method) pair")
    _write_text(path, _csv_text(DETECTION_HEADER, rows))


def load_detections(path) -> list[DetectionResult]:
    out = []
    seen = set()
    for i, row in enumerate(_read_csv(path, DETECTION_HEADER), start=2):
        key = (row["stream_id"], row["method"])
        if key in seen:
            raise DuplicateStream(f"{path}: duplicate row for {key}")
        seen.add(key)
        try:
            conf = float(row["confidence"])
        except ValueError:
            raise ParseError(f"{path}: line {i}: bad confidence {row['confidence']!r}") from None
        out.append(DetectionResult(row["stream_id"], row["method"],
                                   _parse_int(row["kappa_hat"], "kappa_hat", path, i), conf))
    return out


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def manifest_to_dict(m: StreamManifest, stat_table: Optional[str] = None) -> dict:
    doc = {"stream_id": m.stream_id, "num_frames": m.num_frames,
           "true_changepoint": m.true_changepoint, "captions": [list(c) for c in m.captions]}
    if stat_table is not None:
        doc["stat_table"] = stat_table
    return doc


def write_manifest(entries: Iterable[tuple[StreamManifest, Optional[str]]], path) -> None:
    docs = [manifest_to_dict(m, f) for m, f in sorted(entries, key=lambda e: e[0].stream_id)]
    _write_text(path, json.dumps({"schema_version": SCHEMA_VERSION, "streams": docs}, indent=1) + "\n")


def load_manifest(path) -> list[tuple[StreamManifest, Optional[str]]]:
    """Read a manifest index: ``{"schema_version": 1, "streams": [...]}``.

    Each stream entry has ``stream_id``, ``num_frames``, optional
    ``true_changepoint`` and ``captions`` (lists of token ids) and an optional
    ``stat_table`` file name relative to the manifest.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"{path}: expected a schema_version {SCHEMA_VERSION} manifest object")
    out = []
    seen = set()
    for i, e in enumerate(doc.get("streams", [])):
        try:
            m = StreamManifest(str(e["stream_id"]), int(e["num_frames"]), e.get("true_changepoint"),
                               tuple(tuple(c) for c in e.get("captions", [])))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ChangeStreamError):
                raise FileValidationError(path, exc) from exc
            raise ParseError(f"{path}: stream entry {i}: {exc}") from None
        if m.stream_id in seen:
            raise DuplicateStream(f"{path}: stream {m.stream_id!r} appears more than once")
        seen.add(m.stream_id)
        out.append((m, e.get("stat_table")))
    return out


def stat_table_files(path) -> list[tuple[str, Path]]:
    """Resolve ``path`` (a stat-table file, or a directory holding either a
    ``manifest.json`` index or bare ``*.json`` tables) to ``(stream_id, file)``
    pairs sorted by stream id."""
    path = Path(path)
    if path.is_file():
        return [(path.stem, path)]
    if not path.is_dir():
        raise FileNotFoundError(f"no such file or directory: {path}")
    index = path / "manifest.json"
    if index.is_file():
        pairs = [(m.stream_id, path / f) for m, f in load_manifest(index) if f is not None]
    else:
        pairs = [(p.stem, p) for p in path.glob("*.json")]
    return sorted(pairs)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
