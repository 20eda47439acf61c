from __future__ import annotations

import numpy as np

from ..datamodel import Design, IntensityMatrix
from .core import EngineConfig


def masked_distances(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance between rows over mutually observed columns,
    divided by the number of shared columns. Rows sharing no column get inf."""
    x = np.where(mask, values, 0.0)
    w = mask.astype(float)
    x2 = x * x
    shared = w @ w.T
    d2 = x2 @ w.T + w @ x2.T - 2.0 * (x @ x.T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = np.where(shared > 0, np.maximum(d2, 0.0) / shared, np.inf)
    np.fill_diagonal(d2, np.inf)
    return d2


def impute_knn(values, mask, d: Design, cfg: EngineConfig, rng=None) -> np.ndarray:
    P, N = values.shape
    out = np.where(mask, values, np.nan)
    incomplete = np.flatnonzero(~mask.all(axis=1))
    if incomplete.size == 0:
        return out
    dist = masked_distances(values, mask)
    k = cfg.k_neighbors
    for i in incomplete:
        row_mean = values[i, mask[i]].mean()
        for j in np.flatnonzero(~mask[i]):
            cand = np.flatnonzero(mask[:, j] & np.isfinite(dist[i]))
            if cand.size == 0:
                out[i, j] = row_mean
                continue
            # stable sort: ties resolved by row order
            nearest = cand[np.argsort(dist[i, cand], kind="stable")[:k]]
            out[i, j] = values[nearest, j].mean()
    return out


def engine_knn(m: IntensityMatrix, d: Design, cfg: EngineConfig, stream=None) -> IntensityMatrix:
    """Fill each missing cell with the mean of its ``k`` nearest rows' values."""
    filled = impute_knn(m.values, m.mask, d, cfg, stream)
    return m.replace(values=filled, mask=np.ones(m.shape, dtype=bool))
