"""Moderated t-tests per contrast, Benjamini-Hochberg adjustment, decisions."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datamodel import Contrast, Design, format_float
from .moderate import ModerationFit
from .pool import PooledFit
from .specfun import student_sf2

DF_CAP = 1e6
REPORT_COLUMNS = ("row_id", "contrast", "logfc", "t", "df", "p", "p_adj", "decided")


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    rows: tuple[str, ...]
    contrast: Contrast
    contrast_label: str
    logfc: np.ndarray
    t: np.ndarray
    df: float
    p: np.ndarray
    p_adj: np.ndarray | None = None
    decided: np.ndarray | None = None
    header: dict = field(default_factory=dict)


def moderated_t(
    pooled: PooledFit,
    mod: ModerationFit,
    d: Design,
    c: Contrast,
    row_ids=None,
    literal: bool = False,
) -> TestReport:
    """Moderated t for ``beta_a - beta_b``.

    The standard error is ``s_tilde * sqrt(1/n_a + 1/n_b)``. With
    ``literal=True`` the moderated variance itself (not its square root)
    multiplies the square-root term.
    """
    c.check(d)
    n = d.group_sizes
    logfc = pooled.beta[:, c.a] - pooled.beta[:, c.b]
    scale = np.sqrt(1.0 / n[c.a] + 1.0 / n[c.b])
    spread = mod.s_tilde_sq if literal else np.sqrt(mod.s_tilde_sq)
    denom = spread * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(logfc == 0, 0.0, logfc / denom)
    df = min(pooled.df_resid + mod.d0, DF_CAP)
    rows = tuple(row_ids) if row_ids is not None else tuple(str(i) for i in range(logfc.size))
    return TestReport(rows, c, c.label(d), logfc, t, df, pvalue(t, df))


def pvalue(t, df):
    """Two-sided p-value."""
    if not df > 0:
        raise ValueError("df must be > 0")
    return student_sf2(t, df)


def bh_adjust(p) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any(~((p >= 0) & (p <= 1))):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, m + 1)
    scaled = p[order] * (m / ranks)  # factor >= 1, so never rounds below p
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


def decide(report: TestReport, alpha: float = 0.01, raw_alpha: float | None = None) -> TestReport:
    """Flag rows with adjusted p-value <= ``alpha`` (closed at the boundary).

    ``raw_alpha`` additionally requires the unadjusted p-value to pass its own
    level.
    """
    p_adj = report.p_adj if report.p_adj is not None else bh_adjust(report.p)
    decided = p_adj <= alpha
    header = dict(report.header, threshold=alpha)
    if raw_alpha is not None:
        decided &= report.p <= raw_alpha
        header["raw_threshold"] = raw_alpha
    return replace(report, p_adj=p_adj, decided=decided, header=header)


def write_reports(reports, path) -> None:
    """CSV with ``#``-prefixed header lines (one block per contrast)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for rep in reports:
            for key in sorted(rep.header):
                val = rep.header[key]
                val = format_float(val) if isinstance(val, float) else val
                fh.write(f"# {rep.contrast_label} {key}={val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            for i, rid in enumerate(rep.rows):
                w.writerow([
                    rid,
                    rep.contrast_label,
                    format_float(rep.logfc[i]),
                    format_float(rep.t[i]),
                    format_float(rep.df),
                    format_float(rep.p[i]),
                    format_float(rep.p_adj[i]),
                    int(bool(rep.decided[i])),
                ])


def read_report(path) -> dict[str, dict[str, np.ndarray]]:
    """Parse a report CSV into ``{contrast: {column: array}}``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    out: dict[str, dict[str, list]] = {}
    for r in body:
        rec = dict(zip(header, r))
        blk = out.setdefault(rec["contrast"], {k: [] for k in header})
        for k in header:
            blk[k].append(rec[k])
    result = {}
    for con, blk in out.items():
        result[con] = {
            "row_id": np.array(blk["row_id"]),
            "decided": np.array([v == "1" for v in blk["decided"]]),
            **{k: np.array(blk[k], dtype=float) for k in ("logfc", "t", "df", "p", "p_adj")},
        }
    return result
