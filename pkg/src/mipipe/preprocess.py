"""Log transform, quantile normalization and presence filtering."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .datamodel import Design, IntensityMatrix


def log2_transform(m: IntensityMatrix) -> IntensityMatrix:
    bad = m.mask & ~(np.nan_to_num(m.values, nan=1.0) > 0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(
            f"cannot log-transform non-positive value {m.values[i, j]} "
            f"at row {m.row_ids[i]!r}, column {m.col_ids[j]!r}"
        )
    out = np.full(m.shape, np.nan)
    out[m.mask] = np.log2(m.values[m.mask])
    return m.replace(values=out)


def _type7_quantiles(sorted_x: np.ndarray, probs: np.ndarray) -> np.ndarray:
    # R's default quantile type; equivalent to numpy's "linear"
    return np.quantile(sorted_x, probs, method="linear")


def quantile_normalize(m: IntensityMatrix) -> IntensityMatrix:
    """Quantile normalization, column-wise, tolerant of missing cells.

    The reference distribution is the rank-wise mean of the column order
    statistics. For a column with ``n_j`` observed values, each column's
    empirical quantile function is evaluated on ``n_j`` (for the reference:
    ``max n_j``) equally spaced probabilities by type-7 interpolation, so
    complete matrices reduce to the textbook algorithm. An observed value of
    fractional (tie-averaged) rank ``r`` maps to the reference quantile at
    probability ``(r - 1) / (n_j - 1)``.
    """
    counts = m.mask.sum(axis=0)
    if (counts == 0).any():
        j = int(np.argmin(counts))
        raise ValueError(f"column {m.col_ids[j]!r} has no observed values")
    n_ref = int(counts.max())
    grid = np.linspace(0.0, 1.0, n_ref) if n_ref > 1 else np.zeros(1)
    cols = [np.sort(m.values[m.mask[:, j], j]) for j in range(m.shape[1])]
    reference = np.mean([_type7_quantiles(c, grid) for c in cols], axis=0)

    out = np.full(m.shape, np.nan)
    for j, c in enumerate(cols):
        obs = m.mask[:, j]
        n = obs.sum()
        if n == 1:
            out[obs, j] = np.mean(reference)
            continue
        ranks = rankdata(m.values[obs, j], method="average")
        probs = (ranks - 1.0) / (n - 1.0)
        if n == n_ref:
            # exact order statistics; averaged ranks interpolate between them
            lo = np.floor(ranks - 1).astype(int)
            frac = (ranks - 1) - lo
            hi = np.minimum(lo + 1, n_ref - 1)
            out[obs, j] = reference[lo] * (1 - frac) + reference[hi] * frac
        else:
            out[obs, j] = _type7_quantiles(reference, probs)
    return m.replace(values=out)


def presence_counts(m: IntensityMatrix, d: Design) -> np.ndarray:
    """P x I matrix of observed-value counts per condition."""
    return np.stack([m.mask[:, d.columns_of(k)].sum(axis=1) for k in range(d.n_conditions)], axis=1)


def filter_presence(m: IntensityMatrix, d: Design, k: int = 1) -> IntensityMatrix:
    """Keep rows with at least ``k`` observed values in every condition."""
    d = d.aligned_to(m)
    smallest = int(d.group_sizes.min())
    if not 1 <= k <= smallest:
        raise ValueError(f"k={k} must lie in [1, {smallest}] (smallest group size)")
    keep = (presence_counts(m, d) >= k).all(axis=1)
    return m.take_rows(keep)
