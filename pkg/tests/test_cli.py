import json
import logging
import subprocess
import sys
import time

import numpy as np
import pytest

from mipipe.cli import main
from mipipe.datamodel import read_matrix
from mipipe.infer import read_report
from mipipe.pool import DegenerateStackWarning


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def sim1(tmp_path):
    m, d, t = tmp_path / "m.csv", tmp_path / "design.csv", tmp_path / "truth.csv"
    assert _run("simulate", "--design", 1, "--seed", 7, "--out", m, "--design-out", d, "--truth-out", t) == 0
    amp = tmp_path / "amp.csv"
    assert _run("ampute", "--in", m, "--out", amp, "--prop", 0.1, "--seed", 8) == 0
    return tmp_path, amp, d, t


def test_end_to_end(sim1):
    tmp, amp, design, truth = sim1
    assert read_matrix(amp).missing_fraction == pytest.approx(0.1)
    rep = tmp / "report.csv"
    t0 = time.perf_counter()
    code = _run("analyze", "--in", amp, "--design", design, "--out", rep,
                "--method", "mle", "--draws", "auto", "--fdr", 0.01, "--seed", 1)
    assert code == 0
    assert time.perf_counter() - t0 < 60
    parsed = read_report(rep)
    assert list(parsed) == ["c1-c2"]
    assert parsed["c1-c2"]["row_id"].size == 200
    header = [ln for ln in rep.read_text().splitlines() if ln.startswith("#")]
    assert "# c1-c2 D=10" in header and "# c1-c2 method=mle" in header
    manifest = json.loads((tmp / "report.csv.manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["D"] == 10 and len(manifest["config_hash"]) == 64
    assert manifest["options"]["method"] == "mle"

    scores = tmp / "scores.csv"
    assert _run("evaluate", "--report", rep, "--truth", truth, "--out", scores) == 0
    row = scores.read_text().splitlines()[1].split(",")
    assert row[0] == "c1-c2" and int(row[1]) + int(row[4]) == 10


def test_reruns_byte_identical(sim1, monkeypatch):
    tmp, amp, design, _ = sim1
    outs = []
    for i, threads in enumerate(("1", "3")):
        monkeypatch.setenv("MIPIPE_THREADS", threads)
        out = tmp / f"r{i}.csv"
        assert _run("analyze", "--in", amp, "--design", design, "--out", out, "--seed", 5, "--method", "norm") == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_stagewise_matches_analyze(sim1):
    tmp, amp, design, _ = sim1
    assert _run("impute", "--in", amp, "--design", design, "--out-dir", tmp / "stack", "--seed", 2, "--draws", 3) == 0
    manifest = json.loads((tmp / "stack" / "manifest.json").read_text())
    assert manifest["D"] == 3 and len(manifest["files"]) == 3
    assert (tmp / "stack" / "manifest.json.manifest.json").exists()


def test_zero_missing_notes_floor(tmp_path, caplog):
    m, d = tmp_path / "m.csv", tmp_path / "d.csv"
    _run("simulate", "--design", 1, "--seed", 3, "--out", m, "--design-out", d)
    with caplog.at_level(logging.INFO), pytest.warns(DegenerateStackWarning, match="identical"):
        assert _run("analyze", "--in", m, "--design", d, "--out", tmp_path / "r.csv", "--method", "knn") == 0
    assert "floored to D=2" in caplog.text


def test_pipeline_flags(tmp_path):
    m, d = tmp_path / "m.csv", tmp_path / "d.csv"
    g = np.random.default_rng(0)
    rows = ["row_id,protein_id,a1,a2,a3,b1,b2,b3"]
    prots = ["P1", "P1", "P2", "P2", "P1;P2", "P3", "P3", "P4"]
    for i, p in enumerate(prots):
        vals = 2.0 ** g.normal(20, 1, 6)
        cells = ["NA" if (i + j) % 7 == 3 else str(float(v)) for j, v in enumerate(vals)]
        rows.append(",".join([f"pep{i}", p, *cells]))
    m.write_text("\n".join(rows) + "\n")
    d.write_text("sample,condition\na1,A\na2,A\na3,A\nb1,B\nb2,B\nb3,B\n")
    out = tmp_path / "prot.csv"
    code = _run("analyze", "--in", m, "--design", d, "--out", out, "--aggregate", "--log2",
                "--normalize", "--filter", 2, "--draws", 3, "--contrast", "B,A", "--dump-pooled", tmp_path / "pooled.csv")
    assert code == 0
    rep = read_report(out)["B-A"]
    assert set(rep["row_id"]) <= {"P1", "P2", "P3", "P4"}
    assert (tmp_path / "pooled.csv").read_text().startswith("row_id,beta_A,beta_B,var_A,var_B")


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["analyze", "--in", "x.csv", "--out", "r.csv"],
    ["simulate", "--design", "4", "--seed", "1", "--out", "m.csv"],
    ["analyze", "--in", "x.csv", "--design", "d.csv", "--out", "r.csv", "--bogus"],
    ["analyze", "--in", "x.csv", "--design", "d.csv", "--out", "r.csv", "--draws", "many"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_contrast_exit_2(sim1):
    tmp, amp, design, _ = sim1
    assert _run("analyze", "--in", amp, "--design", design, "--out", tmp / "r.csv", "--contrast", "c1,zz") == 2


def test_data_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("row_id,s1,s2\nr1,1.0,abc\n")
    assert _run("ampute", "--in", bad, "--out", tmp_path / "o.csv", "--prop", 0.1, "--seed", 1) == 1
    assert "mipipe ampute:" in capsys.readouterr().err
    assert _run("ampute", "--in", tmp_path / "missing.csv", "--out", tmp_path / "o.csv", "--prop", 0.1, "--seed", 1) == 1


def test_bench_command(tmp_path):
    out = tmp_path / "bench.csv"
    assert _run("bench", "--design", 1, "--reps", 1, "--mv", "0.05", "--seed", 2, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 3
    assert (tmp_path / "bench_summary.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mipipe", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "analyze" in proc.stdout
