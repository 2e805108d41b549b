"""Command-line entry point: ``changestream <subcommand> [flags]``.

Exit status is 0 on success, 1 when an input or flag fails validation and 2
on I/O or parse failures.  Every run prints its resolved configuration as one
JSON line before doing any work.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import stream_io
from .core import ChangeStreamError, ParseError, StreamManifest, ValidationError
from .detectors import LAMBDA_RC, METHOD_ALIASES, RcParams, detect, detect_incremental, incremental_profile, score_profile
from .evaluation import WINDOWS, evaluate_methods
from .pair_mining import mine
from .simulator import SimConfig, simulate_benchmark, simulate_stream

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

CLI_METHODS = ("step", "gc", "rc", "rc0", "rc-lambda0", "step-io", "gc-io", "rc-io")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _list_arg(parser_type):
    def parse(text):
        try:
            return parser_type(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="changestream", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic benchmark: one stat table per stream, manifest, truth")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-streams", type=int, default=400, help="streams per candidate changepoint")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--candidates", type=_list_arg(_int_list), default=list(range(1, 9)),
                   help="e.g. 1-8 or 2,4,6")
    p.add_argument("--no-change-streams", type=int, default=400)
    p.add_argument("--rep-dim", type=int, default=16)
    p.add_argument("--mu-change", type=float, default=1.0)
    p.add_argument("--mu-nochange", type=float, default=0.0)
    p.add_argument("--sigma-p", type=float, default=0.0)
    p.add_argument("--sigma-h", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("detect", help="score stat tables and write detections CSV")
    p.add_argument("--scores", required=True, type=Path, help="stat-table file or benchmark directory")
    p.add_argument("--method", type=_list_arg(lambda s: [m.strip() for m in s.split(",") if m.strip()]),
                   default=["rc"], help=f"comma list of {', '.join(CLI_METHODS)}")
    p.add_argument("--lambda", dest="lambda_rc", type=float, default=LAMBDA_RC)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--naive", action="store_true", help="re-sum every candidate instead of running sums")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("eval", help="AP per window and mAP from detections and ground truth")
    p.add_argument("--detections", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--windows", type=_list_arg(_int_list), default=list(WINDOWS))
    p.add_argument("--out", type=Path, help="report CSV (stdout when omitted)")
    p.add_argument("--pr-out", type=Path,
                   help="precision-recall points CSV (default: <out>.pr_points.csv next to the report)")

    p = sub.add_parser("mine-pairs", help="labeled / unlabeled training pairs from a manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--reverse", action="store_true", help="mine the time-reversed streams")

    p = sub.add_parser("gradcheck", help="finite-difference and REINFORCE unbiasedness suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)

    p = sub.add_parser("bench", help="naive vs incremental detection timing on one large table")
    p.add_argument("--frames", type=int, default=512)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--rep-dim", type=int, default=16)
    p.add_argument("--method", default="rc", choices=CLI_METHODS)
    p.add_argument("--lambda", dest="lambda_rc", type=float, default=LAMBDA_RC)
    return parser


def _resolved(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = SimConfig(num_streams=args.num_streams, num_frames=args.frames, candidates=tuple(args.candidates),
                       no_change_streams=args.no_change_streams, rep_dim=args.rep_dim,
                       mu_change=args.mu_change, mu_nochange=args.mu_nochange,
                       sigma_p=args.sigma_p, sigma_h=args.sigma_h, seed=args.seed)
    out = stream_io.ensure_dir(args.out)
    data = simulate_benchmark(config, workers=args.workers)
    entries = []
    for table, truth in data:
        name = f"{truth.stream_id}.json"
        stream_io.save_stat_table(table, out / name)
        entries.append((StreamManifest(truth.stream_id, table.num_frames, truth.kappa_star), name))
    stream_io.write_manifest(entries, out / "manifest.json")
    stream_io.write_ground_truth([t for _, t in data], out / "truth.csv")
    print(f"wrote {len(data)} streams to {out}")
    return EXIT_OK


def _detect_file(job):
    sid, path, methods, lambda_rc, naive = job
    table = stream_io.load_stat_table(path)
    fn = detect if naive else detect_incremental
    return [fn(table, m, RcParams(lambda_rc), stream_id=sid) for m in methods]


def cmd_detect(args) -> int:
    methods = []
    for m in args.method:
        if m not in CLI_METHODS:
            raise UsageError(f"--method: unknown method {m!r}")
        methods.append(METHOD_ALIASES.get(m, m))
    RcParams(args.lambda_rc)
    files = stream_io.stat_table_files(args.scores)
    jobs = [(sid, path, methods, args.lambda_rc, args.naive) for sid, path in files]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            chunks = list(pool.map(_detect_file, jobs, chunksize=max(1, len(jobs) // (4 * args.workers))))
    else:
        chunks = [_detect_file(j) for j in jobs]
    results = [r for chunk in chunks for r in chunk]
    stream_io.write_detections(results, args.out)
    print(f"wrote {len(results)} detections to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if any(w < 0 for w in args.windows):
        raise UsageError("--windows: window sizes must be >= 0")
    detections = stream_io.load_detections(args.detections)
    truths = stream_io.load_ground_truth(args.truth)
    reports = evaluate_methods(detections, truths, args.windows)
    rows = []
    for method, rep in reports.items():
        rows += [(method, w, repr(ap)) for w, ap in rep.ap_per_window.items()]
        rows.append((method, "mAP", repr(rep.map_value)))
    text = stream_io._csv_text(("method", "window", "ap"), rows)
    if args.out:
        stream_io._write_text(args.out, text)
    else:
        sys.stdout.write(text)
    pr_out = args.pr_out or (args.out.with_suffix(".pr_points.csv") if args.out else None)
    if pr_out:
        pr_rows = [(m, w, repr(r), repr(p)) for m, rep in reports.items()
                   for w, pts in rep.pr_points.items() for r, p in pts]
        stream_io._write_text(pr_out, stream_io._csv_text(("method", "window", "recall", "precision"), pr_rows))
    for method, rep in reports.items():
        aps = " ".join(f"AP@{w}={ap:.1f}" for w, ap in rep.ap_per_window.items())
        print(f"{method}: {aps} mAP={rep.map_value:.1f}")
    return EXIT_OK


def cmd_mine_pairs(args) -> int:
    entries = stream_io.load_manifest(args.manifest)
    rows = []
    for manifest, _ in entries:
        mined = mine(manifest, reverse=args.reverse)
        for lp in mined.labeled:
            rows.append((manifest.stream_id, lp.key.t, lp.key.t_prime, " ".join(map(str, lp.caption))))
        for key in mined.unlabeled:
            rows.append((manifest.stream_id, key.t, key.t_prime, ""))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    stream_io._write_text(args.out, stream_io._csv_text(("stream_id", "t", "t_prime", "label"), rows))
    print(f"wrote {len(rows)} pairs to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .description.gradcheck import format_rows, run_gradient_suite

    rows = run_gradient_suite(args.seed, args.instances)
    print(format_rows(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_INVALID


def cmd_bench(args) -> int:
    if args.frames < 2:
        raise UsageError("--frames must be >= 2")
    method = METHOD_ALIASES.get(args.method, args.method)
    kappa = args.frames // 2
    config = SimConfig(num_streams=1, num_frames=args.frames, candidates=(kappa,), no_change_streams=0,
                       rep_dim=args.rep_dim, sigma_p=1.0, sigma_h=0.5, seed=args.seed)
    table, _ = simulate_stream(config, kappa, args.seed)
    params = RcParams(args.lambda_rc)
    t0 = time.perf_counter()
    naive = score_profile(table, method, params)
    t1 = time.perf_counter()
    fast = incremental_profile(table, method, params)
    t2 = time.perf_counter()
    dev = float(np.abs(naive - fast).max())
    print(f"frames={args.frames} naive={t1 - t0:.4f}s incremental={t2 - t1:.4f}s "
          f"speedup={(t1 - t0) / max(t2 - t1, 1e-12):.1f}x max_deviation={dev:.3e}")
    return EXIT_OK if dev < 1e-9 else EXIT_INVALID


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "eval": cmd_eval,
            "mine-pairs": cmd_mine_pairs, "gradcheck": cmd_gradcheck, "bench": cmd_bench}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        print("config " + json.dumps(_resolved(args), sort_keys=True))
        return COMMANDS[args.command](args)
    except stream_io.FileValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc.cause, ValidationError) else EXIT_IO
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ParseError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ChangeStreamError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
