import math
from fractions import Fraction

import numpy as np
import pytest

from mipipe.evaluate import BenchConfig, ConfusionCounts, bench, confusion, metrics, summarize, write_bench
from mipipe.impute import EngineConfig
from mipipe.simulate import SimTruth


def test_confusion_examples():
    truth = np.array([True, True, False, False, False])
    assert confusion(truth, truth) == ConfusionCounts(2, 0, 3, 0)
    assert confusion(~truth, truth) == ConfusionCounts(0, 3, 0, 2)
    assert confusion(truth, SimTruth(truth)).tp == 2
    with pytest.raises(ValueError):
        confusion(truth[:3], truth)


def test_confusion_loop_oracle(rng):
    dec, truth = rng.random(100) < 0.3, rng.random(100) < 0.2
    tp = fp = tn = fn = 0
    for a, b in zip(dec, truth):
        if a and b:
            tp += 1
        elif a:
            fp += 1
        elif b:
            fn += 1
        else:
            tn += 1
    c = confusion(dec, truth)
    assert (c.tp, c.fp, c.tn, c.fn) == (tp, fp, tn, fn) and c.total == 100


def test_metric_examples():
    assert metrics(ConfusionCounts(10, 0, 190, 0)) == dict.fromkeys(
        ("sensitivity", "specificity", "precision", "f_score", "mcc"), 1.0)
    assert metrics(ConfusionCounts(1, 1, 1, 1))["mcc"] == 0.0
    v = metrics(ConfusionCounts(5, 2, 90, 3))
    assert v["sensitivity"] == 0.625
    assert v["precision"] == pytest.approx(5 / 7)
    assert v["f_score"] == pytest.approx(2 / 3)
    # standard Matthews formula: 444 / sqrt(7 * 8 * 92 * 93)
    assert v["mcc"] == pytest.approx(0.6414363515326532, rel=1e-15)


def test_undefined_marker():
    v = metrics(ConfusionCounts(0, 0, 50, 5))
    assert math.isnan(v["precision"]) and math.isnan(v["mcc"])
    assert v["sensitivity"] == 0.0 and v["specificity"] == 1.0


def _oracle(tp, fp, tn, fn):
    def ratio(a, b):
        return float(Fraction(a, b)) if b else None

    num = tp * tn - fp * fn
    prod = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return {
        "sensitivity": ratio(tp, tp + fn),
        "specificity": ratio(tn, tn + fp),
        "precision": ratio(tp, tp + fp),
        "f_score": ratio(tp, Fraction(2 * tp + fp + fn, 2)) if (2 * tp + fp + fn) else None,
        "mcc_sq": Fraction(num * num, prod) if prod else None,
        "mcc_sign": (num > 0) - (num < 0),
    }


def test_metrics_match_rational_oracle():
    g = np.random.default_rng(99)
    for _ in range(1000):
        tp, fp, tn, fn = (int(x) for x in g.integers(0, 60, 4) * (g.random(4) > 0.1))
        got = metrics(ConfusionCounts(tp, fp, tn, fn))
        want = _oracle(tp, fp, tn, fn)
        for k in ("sensitivity", "specificity", "precision", "f_score"):
            if want[k] is None:
                assert math.isnan(got[k])
            else:
                assert got[k] == want[k]
        if want["mcc_sq"] is None:
            assert math.isnan(got["mcc"])
        else:
            assert got["mcc"] ** 2 == pytest.approx(float(want["mcc_sq"]), rel=1e-14, abs=1e-300)
            assert (got["mcc"] > 0) - (got["mcc"] < 0) == want["mcc_sign"]
            assert -1 <= got["mcc"] <= 1


SMALL = BenchConfig(design_id=1, replicates=2, mv_grid=(0.05,), seed=3)


def test_bench_shape_and_determinism(tmp_path):
    a = bench(SMALL)
    assert len(a) == 2 * 1 * 2
    assert [r.workflow for r in a] == ["mi4p", "baseline"] * 2
    assert all(r.counts.total == r.n_rows for r in a)
    assert a == bench(SMALL)
    write_bench(a, tmp_path / "a.csv", tmp_path / "a_sum.csv")
    write_bench(bench(SMALL, threads=2), tmp_path / "b.csv", tmp_path / "b_sum.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_sum.csv").read_bytes() == (tmp_path / "b_sum.csv").read_bytes()


@pytest.mark.parametrize("method", ["knn", "mle"])
def test_zero_missing_identical_decisions(method):
    cfg = BenchConfig(design_id=1, replicates=2, mv_grid=(0.0,), engine=EngineConfig(method), seed=1)
    recs = bench(cfg)
    for mi, base in zip(recs[::2], recs[1::2]):
        assert mi.counts == base.counts


def test_summarize_layout():
    recs = bench(SMALL)
    rows = summarize(recs)
    assert [r["workflow"] for r in rows] == ["mi4p", "baseline"]
    assert rows[0]["replicates"] == 2
    assert 0 <= rows[0]["sensitivity_pct_mean"] <= 100
    assert rows[0]["sensitivity_undefined"] == 0


def test_unknown_design():
    with pytest.raises(ValueError):
        bench(BenchConfig(design_id=9, replicates=1))
