"""Classification metrics and the simulation benchmark harness.

The benchmark scores two workflows on the same amputed data:

* ``mi4p``: D imputations, Rubin pooling, projection, moderation, testing;
* ``baseline``: the first of those imputations alone, ordinary residual
  variances, moderation, testing. Sharing the draw keeps the comparison
  paired (common random numbers).
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import Contrast
from .impute import EngineConfig, choose_draw_count, impute_multiple
from .pipeline import AnalysisConfig, analyze_single, moderate_pooled, run_contrasts
from .pool import pool_stack
from .preprocess import filter_presence, quantile_normalize
from .rng import stream
from .simulate import DESIGNS, SimSpec, ampute_mcar

METRICS = ("sensitivity", "specificity", "precision", "f_score", "mcc")
COUNTS = ("tp", "fp", "tn", "fn")
WORKFLOWS = ("mi4p", "baseline")
DEFAULT_MV_GRID = (0.01, 0.05, 0.10, 0.15, 0.20, 0.25)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(decisions, truth) -> ConfusionCounts:
    decisions = np.asarray(decisions, dtype=bool)
    truth = np.asarray(getattr(truth, "de_rows", truth), dtype=bool)
    if decisions.shape != truth.shape:
        raise ValueError(f"length mismatch: {decisions.size} decisions vs {truth.size} labels")
    return ConfusionCounts(
        int(np.sum(decisions & truth)),
        int(np.sum(decisions & ~truth)),
        int(np.sum(~decisions & ~truth)),
        int(np.sum(~decisions & truth)),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def metrics(c: ConfusionCounts) -> dict[str, float]:
    """Sensitivity, specificity, precision, F-score and MCC.

    A zero denominator gives NaN, the undefined marker; summaries skip NaNs
    and report how many there were.
    """
    prod = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    return {
        "sensitivity": _ratio(c.tp, c.tp + c.fn),
        "specificity": _ratio(c.tn, c.tn + c.fp),
        "precision": _ratio(c.tp, c.tp + c.fp),
        # tp / (tp + (fp + fn) / 2), kept in integers
        "f_score": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        "mcc": (c.tp * c.tn - c.fp * c.fn) / math.sqrt(prod) if prod else math.nan,
    }


@dataclass(frozen=True)
class BenchConfig:
    design_id: int = 1
    replicates: int = 100
    mv_grid: tuple = DEFAULT_MV_GRID
    engine: EngineConfig = field(default_factory=EngineConfig)
    fdr: float = 0.01
    seed: int = 0
    normalize: bool = False


@dataclass(frozen=True)
class BenchRecord:
    design_id: int
    replicate: int
    mv_fraction: float
    method: str
    workflow: str
    D: int
    n_rows: int
    d0: float
    s0_sq: float
    counts: ConfusionCounts
    values: dict

    def as_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k not in ("counts", "values")}
        row.update(asdict(self.counts))
        row.update(self.values)
        return row


def _replicate_seed(cfg: BenchConfig, *keys) -> int:
    return int(stream(cfg.seed, "bench", cfg.design_id, *keys).integers(0, 2**63 - 1))


def run_replicate(cfg: BenchConfig, r: int) -> list[BenchRecord]:
    m0, design, truth = SimSpec(cfg.design_id, _replicate_seed(cfg, "sim", r)).generate()
    contrast = Contrast(1, 0)
    acfg = AnalysisConfig(engine=cfg.engine, fdr=cfg.fdr)
    out = []
    for f_idx, frac in enumerate(cfg.mv_grid):
        m = ampute_mcar(m0, frac, _replicate_seed(cfg, "ampute", r, f_idx))
        if cfg.normalize:
            m = quantile_normalize(m)
        keep = np.isin(m.row_ids, filter_presence(m, design, 1).row_ids)
        m = m.take_rows(keep)
        labels = truth.de_rows[keep]
        D = choose_draw_count(frac)
        stack = impute_multiple(m, design, D, cfg.engine, _replicate_seed(cfg, "impute", r, f_idx))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pooled = pool_stack(stack, design)
        mod = moderate_pooled(pooled, design)
        mi = run_contrasts(pooled, mod, design, m.row_ids, [contrast], acfg, {"d0": mod.d0, "s0_sq": mod.s0_sq})[0]
        base = analyze_single(stack.draws[0].values, design, acfg, [contrast], m.row_ids)[0]
        for workflow, rep, Dw in (("mi4p", mi, D), ("baseline", base, 1)):
            c = confusion(rep.decided, labels)
            out.append(BenchRecord(
                cfg.design_id, r, frac, cfg.engine.method, workflow, Dw, int(keep.sum()),
                float(rep.header["d0"]), float(rep.header["s0_sq"]),
                c, metrics(c),
            ))
    return out


def bench(cfg: BenchConfig, threads: int = 1) -> list[BenchRecord]:
    """All replicates x missing fractions x workflows, in replicate order."""
    if cfg.design_id not in DESIGNS:
        raise ValueError(f"unknown design {cfg.design_id}")
    reps = range(cfg.replicates)
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            chunks = list(ex.map(run_replicate, [cfg] * cfg.replicates, reps))
    else:
        chunks = [run_replicate(cfg, r) for r in reps]
    return [rec for chunk in chunks for rec in chunk]


def summarize(records) -> list[dict]:
    """Mean and sd per (missing fraction, workflow); rates in percent."""
    groups: dict[tuple, list[BenchRecord]] = {}
    for rec in records:
        groups.setdefault((rec.mv_fraction, rec.workflow), []).append(rec)
    rows = []
    for (frac, workflow), recs in sorted(groups.items(), key=lambda kv: (kv[0][0], WORKFLOWS.index(kv[0][1]))):
        row = {
            "design_id": recs[0].design_id,
            "mv_fraction": frac,
            "method": recs[0].method,
            "workflow": workflow,
            "replicates": len(recs),
        }
        for k in COUNTS:
            v = np.array([getattr(r.counts, k) for r in recs], dtype=float)
            row[f"{k}_mean"], row[f"{k}_sd"] = v.mean(), _sd(v)
        for k in METRICS:
            v = np.array([r.values[k] for r in recs], dtype=float)
            ok = v[~np.isnan(v)] * 100
            row[f"{k}_pct_mean"] = ok.mean() if ok.size else math.nan
            row[f"{k}_pct_sd"] = _sd(ok)
            row[f"{k}_undefined"] = int(np.isnan(v).sum())
        rows.append(row)
    return rows


def _sd(v: np.ndarray) -> float:
    return float(np.std(v, ddof=1)) if v.size > 1 else math.nan


def _fmt(v) -> str:
    if isinstance(v, float):
        return "NA" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def write_rows(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])


def write_bench(records, results_path, summary_path=None) -> None:
    write_rows([r.as_row() for r in records], results_path)
    if summary_path is not None:
        write_rows(summarize(records), summary_path)
