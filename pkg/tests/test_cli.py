import csv
import hashlib
import json

import numpy as np
import pytest

from changestream import StatTable, StreamManifest, stream_io
from changestream.cli import run


def read_report(path):
    with open(path, newline="") as fh:
        return {(r["method"], r["window"]): float(r["ap"]) for r in csv.DictReader(fh)}


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


SMALL = ["--num-streams", "4", "--no-change-streams", "4"]


def test_small_pipeline(tmp_path, capsys):
    d = tmp_path / "d"
    assert run(["simulate", "--seed", "1", "--out", str(d)] + SMALL) == 0
    out = capsys.readouterr().out
    assert out.startswith("config ")
    assert json.loads(out.splitlines()[0][len("config "):])["seed"] == 1
    assert (d / "manifest.json").is_file() and (d / "truth.csv").is_file()
    assert len(list(d.glob("s*.json"))) == 36

    det = tmp_path / "det.csv"
    assert run(["detect", "--scores", str(d), "--method", "rc,gc,step,rc0", "--lambda", "1.25", "--out", str(det)]) == 0
    report = tmp_path / "report.csv"
    assert run(["eval", "--detections", str(det), "--truth", str(d / "truth.csv"), "--out", str(report)]) == 0
    aps = read_report(report)
    for m in ("rc", "gc", "step", "rc-lambda0"):
        assert aps[(m, "mAP")] == 100.0
    assert (tmp_path / "report.pr_points.csv").is_file()


def test_parallel_detect_same_bytes(tmp_path):
    d = tmp_path / "d"
    run(["simulate", "--seed", "2", "--out", str(d), "--sigma-p", "0.5", "--sigma-h", "0.3"] + SMALL)
    run(["detect", "--scores", str(d), "--method", "rc,gc", "--out", str(tmp_path / "a.csv")])
    run(["detect", "--scores", str(d), "--method", "rc,gc", "--out", str(tmp_path / "b.csv"), "--workers", "3"])
    run(["detect", "--scores", str(d), "--method", "rc,gc", "--out", str(tmp_path / "c.csv"), "--naive"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    # the naive path sums in a different order, so only the last bits may differ
    fast = stream_io.load_detections(tmp_path / "a.csv")
    naive = stream_io.load_detections(tmp_path / "c.csv")
    assert [(d.stream_id, d.method, d.kappa_hat) for d in fast] == [(d.stream_id, d.method, d.kappa_hat) for d in naive]
    assert max(abs(a.confidence - b.confidence) for a, b in zip(fast, naive)) < 1e-9


def test_inputs_not_mutated(tmp_path):
    d = tmp_path / "d"
    run(["simulate", "--seed", "3", "--out", str(d)] + SMALL)
    before = digest(d)
    run(["detect", "--scores", str(d), "--out", str(tmp_path / "det.csv")])
    run(["eval", "--detections", str(tmp_path / "det.csv"), "--truth", str(d / "truth.csv"),
         "--out", str(tmp_path / "r.csv")])
    run(["mine-pairs", "--manifest", str(d / "manifest.json"), "--out", str(tmp_path / "p.csv")])
    assert digest(d) == before


def test_missing_representations_exit_1(tmp_path, capsys):
    path = tmp_path / "bare.json"
    stream_io.save_stat_table(StatTable.from_arrays(np.triu(np.ones((4, 4)), 1)), path)
    assert run(["detect", "--scores", str(path), "--method", "rc", "--out", str(tmp_path / "x.csv")]) == 1
    assert "MissingRepresentations" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["detect", "--scores", "x", "--method", "bogus", "--out", "y"],
    ["simulate", "--out", "d", "--frames", "ten"],
    ["simulate", "--out", "d", "--frames", "5", "--candidates", "1-8"],
    ["bench", "--frames", "1"],
    ["frobnicate"],
])
def test_validation_errors_exit_1(tmp_path, argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_io_errors_exit_2(tmp_path):
    assert run(["detect", "--scores", str(tmp_path / "absent.json"), "--out", str(tmp_path / "x.csv")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["detect", "--scores", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    truth = tmp_path / "t.csv"
    truth.write_text("stream_id,kappa_star\na,1\na,2\n")
    dets = tmp_path / "d.csv"
    dets.write_text("stream_id,method,kappa_hat,confidence\na,rc,1,0.5\n")
    assert run(["eval", "--detections", str(dets), "--truth", str(truth)]) == 2


def test_invalid_table_file_exit_1(tmp_path):
    path = tmp_path / "t.json"
    path.write_text('{"schema_version":1,"num_frames":3,"rep_dim":0,"records":[{"t":0,"t_prime":1,"p":0.3}]}')
    assert run(["detect", "--scores", str(path), "--method", "gc", "--out", str(tmp_path / "x.csv")]) == 1


def test_mine_pairs(tmp_path):
    m = tmp_path / "m.json"
    stream_io.write_manifest([(StreamManifest("five", 5, 3, ((4, 7),)), None),
                              (StreamManifest("u", 4, 2), None)], m)
    out = tmp_path / "pairs.csv"
    assert run(["mine-pairs", "--manifest", str(m), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out, newline="")))
    five = [r for r in rows if r["stream_id"] == "five"]
    assert sum(r["label"] == "0" for r in five) == 4
    assert sum(r["label"] == "4 7" for r in five) == 6
    assert sum(r["label"] == "" for r in rows if r["stream_id"] == "u") == 4


def test_bench(capsys):
    assert run(["bench", "--frames", "64", "--seed", "3"]) == 0
    line = capsys.readouterr().out.splitlines()[-1]
    assert "naive=" in line and "incremental=" in line
    assert float(line.split("max_deviation=")[1]) < 1e-9


def test_gradcheck(capsys):
    assert run(["gradcheck", "--instances", "2"]) == 0
    assert "FAIL" not in capsys.readouterr().out
