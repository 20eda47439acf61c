"""missForest-style iterative random-forest imputation on the whole matrix."""
from __future__ import annotations

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from ..datamodel import Design, IntensityMatrix
from ..rng import child_seed
from .core import EngineConfig


def impute_rf(values, mask, d: Design, cfg: EngineConfig, rng) -> np.ndarray:
    P, N = values.shape
    col_means = np.array([values[mask[:, j], j].mean() for j in range(N)])
    cur = np.where(mask, values, col_means)
    if mask.all():
        return cur
    n_missing = (~mask).sum(axis=0)
    order = [j for j in np.argsort(n_missing, kind="stable") if n_missing[j] > 0]
    seeds = [child_seed(rng) for _ in range(cfg.max_iter * len(order))]
    prev, prev_delta = cur, np.inf
    for it in range(cfg.max_iter):
        new = prev.copy()
        for pos, j in enumerate(order):
            obs = mask[:, j]
            others = np.delete(np.arange(N), j)
            forest = RandomForestRegressor(
                n_estimators=cfg.rf_trees, random_state=seeds[it * len(order) + pos], n_jobs=1
            )
            forest.fit(new[np.ix_(obs, others)], values[obs, j])
            new[~obs, j] = forest.predict(new[np.ix_(~obs, others)])
        delta = np.sum((new - prev)[~mask] ** 2) / max(np.sum(new[~mask] ** 2), 1e-300)
        if delta > prev_delta:
            # stopping rule: the first increase keeps the previous iterate
            return prev
        prev, prev_delta = new, delta
    return prev


def engine_rf(m: IntensityMatrix, d: Design, cfg: EngineConfig, stream) -> IntensityMatrix:
    filled = impute_rf(m.values, m.mask, d, cfg, stream)
    return m.replace(values=filled, mask=np.ones(m.shape, dtype=bool))
