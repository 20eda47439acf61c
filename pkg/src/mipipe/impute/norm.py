"""Bayesian linear regression imputation by chained equations.

Per condition, each incomplete column is regressed on the other columns of
the condition over the rows where it is observed (predictors at their current
fill). Parameters are drawn from their posterior under a flat prior
(sigma^2 from a scaled inverse chi-square, coefficients Gaussian given
sigma^2) and missing cells are drawn from the predictive distribution.
"""
from __future__ import annotations

import numpy as np

from ..datamodel import Design, IntensityMatrix
from .core import EngineConfig

RIDGE = 1e-5


def posterior_draw(X, y, X_new, rng) -> np.ndarray:
    n, q = X.shape
    xtx = X.T @ X
    xtx = xtx + RIDGE * np.diag(np.diag(xtx))
    V = np.linalg.inv(xtx)
    V = (V + V.T) / 2
    beta = V @ (X.T @ y)
    resid = y - X @ beta
    df = max(n - q, 1)
    sigma = np.sqrt(resid @ resid / rng.chisquare(df))
    beta_star = beta + np.linalg.cholesky(V) @ rng.standard_normal(q) * sigma
    return X_new @ beta_star + rng.standard_normal(X_new.shape[0]) * sigma


def _predictors(mask_block: np.ndarray, target: int, n_obs: int) -> list[int]:
    others = [c for c in range(mask_block.shape[1]) if c != target]
    # fewest-missing first; drop from the end until the fit is estimable
    others.sort(key=lambda c: (-mask_block[:, c].sum(), c))
    while others and n_obs < len(others) + 2:
        others.pop()
    return others


def impute_block(Y: np.ndarray, mask: np.ndarray, rng, n_iter: int) -> np.ndarray:
    n, p = Y.shape
    cur = np.where(mask, Y, np.nan)
    if mask.all():
        return cur
    for j in range(p):
        miss = ~mask[:, j]
        if miss.any():
            cur[miss, j] = rng.choice(Y[mask[:, j], j], size=miss.sum())
    incomplete = [j for j in range(p) if not mask[:, j].all()]
    for _ in range(n_iter):
        for j in incomplete:
            obs = mask[:, j]
            preds = _predictors(mask, j, int(obs.sum()))
            X = np.column_stack([np.ones(n)] + [cur[:, c] for c in preds])
            cur[~obs, j] = posterior_draw(X[obs], Y[obs, j], X[~obs], rng)
    return cur


def impute_norm(values, mask, d: Design, cfg: EngineConfig, rng) -> np.ndarray:
    out = np.where(mask, values, np.nan)
    for k in range(d.n_conditions):
        cols = d.columns_of(k)
        out[:, cols] = impute_block(values[:, cols], mask[:, cols], rng, cfg.max_iter)
    return out


def engine_norm(m: IntensityMatrix, d: Design, cfg: EngineConfig, stream) -> IntensityMatrix:
    d = d.aligned_to(m)
    filled = impute_norm(m.values, m.mask, d, cfg, stream)
    return m.replace(values=filled, mask=np.ones(m.shape, dtype=bool))
