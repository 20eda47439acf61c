from __future__ import annotations

import numpy as np

from ..datamodel import Design, IntensityMatrix
from .core import ConvergenceError, EngineConfig


def iterative_pca(values, mask, n_components: int, max_iter: int, tol: float):
    """Alternate a column-centred rank-``n_components`` SVD fit and refilling.

    Returns the completed matrix and the per-iteration squared reconstruction
    error over observed cells.
    """
    P, N = values.shape
    k = min(n_components, P, N)
    row_means = np.array([values[i, mask[i]].mean() for i in range(P)])
    cur = np.where(mask, values, row_means[:, None])
    objective = []
    for _ in range(max_iter):
        center = cur.mean(axis=0)
        try:
            U, s, Vt = np.linalg.svd(cur - center, full_matrices=False)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError(f"SVD failed: {e}") from e
        fit = center + (U[:, :k] * s[:k]) @ Vt[:k]
        objective.append(float(np.sum((values[mask] - fit[mask]) ** 2)))
        new = np.where(mask, values, fit)
        change = np.sum((new - cur) ** 2) / max(np.sum(cur**2), 1e-300)
        cur = new
        if change < tol:
            break
    return cur, objective


def impute_pca(values, mask, d: Design, cfg: EngineConfig, rng=None) -> np.ndarray:
    if mask.all():
        return values.copy()
    filled, _ = iterative_pca(values, mask, cfg.n_components, cfg.max_iter, cfg.tol)
    return filled


def engine_pca(m: IntensityMatrix, d: Design, cfg: EngineConfig, stream=None) -> IntensityMatrix:
    filled = impute_pca(m.values, m.mask, d, cfg, stream)
    return m.replace(values=filled, mask=np.ones(m.shape, dtype=bool))
