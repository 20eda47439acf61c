"""EM for a multivariate normal with missing entries, condition by condition.

Within a condition the rows are i.i.d. observations of a vector over that
condition's samples. EM yields (mu, Sigma); each missing sub-vector is then
drawn from its conditional normal given the observed part (or set to the
conditional mean in deterministic mode).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datamodel import Design, IntensityMatrix
from .core import ConvergenceError, EngineConfig


@dataclass
class MVNFit:
    mu: np.ndarray
    sigma: np.ndarray
    n_iter: int
    loglik: list


def _ridge(S: np.ndarray) -> np.ndarray:
    dim = S.shape[0]
    return S + np.eye(dim) * 1e-6 * max(np.trace(S), 1e-300) / dim


def _solve_psd(A, B):
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        c = np.linalg.cholesky(_ridge(A))
    y = np.linalg.solve(c, B)
    return np.linalg.solve(c.T, y), c


def _patterns(mask: np.ndarray):
    code = mask.astype(np.int64) @ (1 << np.arange(mask.shape[1], dtype=np.int64))
    for c in np.unique(code):
        rows = np.flatnonzero(code == c)
        yield rows, mask[rows[0]]


def _conditional(mu, sigma, obs, x_obs):
    """Conditional mean (rows) and covariance of the missing part."""
    mis = ~obs
    if not obs.any():
        return np.broadcast_to(mu, (x_obs.shape[0], mu.size)).copy(), sigma.copy()
    s_oo = sigma[np.ix_(obs, obs)]
    s_om = sigma[np.ix_(obs, mis)]
    coef, _ = _solve_psd(s_oo, s_om)
    mean = mu[mis] + (x_obs - mu[obs]) @ coef
    cov = sigma[np.ix_(mis, mis)] - s_om.T @ coef
    return mean, (cov + cov.T) / 2


def observed_loglik(Y, mask, mu, sigma) -> float:
    ll = 0.0
    for rows, obs in _patterns(mask):
        if not obs.any():
            continue
        s_oo = sigma[np.ix_(obs, obs)]
        r = Y[np.ix_(rows, obs)] - mu[obs]
        sol, c = _solve_psd(s_oo, r.T)
        logdet = 2.0 * np.log(np.diag(c)).sum()
        ll -= 0.5 * (np.sum(r.T * sol) + rows.size * (logdet + obs.sum() * np.log(2 * np.pi)))
    return float(ll)


def em_mvn(Y: np.ndarray, mask: np.ndarray, tol: float = 1e-4, max_iter: int = 1000) -> MVNFit:
    n, p = Y.shape
    Yz = np.where(mask, Y, 0.0)
    if mask.all():
        mu = Y.mean(axis=0)
        r = Y - mu
        return MVNFit(mu, r.T @ r / n, 1, [observed_loglik(Y, mask, mu, r.T @ r / n)])
    counts = mask.sum(axis=0)
    if (counts == 0).any():
        raise ValueError("a column has no observed value")
    mu = Yz.sum(axis=0) / counts
    var = np.array([np.var(Y[mask[:, j], j]) for j in range(p)])
    sigma = np.diag(np.where(var > 0, var, 1.0))
    pats = list(_patterns(mask))
    history = [observed_loglik(Y, mask, mu, sigma)]
    for it in range(1, max_iter + 1):
        T1 = np.zeros(p)
        T2 = np.zeros((p, p))
        for rows, obs in pats:
            X = Y[rows].copy()
            if not obs.all():
                mean, cov = _conditional(mu, sigma, obs, Y[np.ix_(rows, obs)])
                X[:, ~obs] = mean
                T2[np.ix_(~obs, ~obs)] += rows.size * cov
            T1 += X.sum(axis=0)
            T2 += X.T @ X
        new_mu = T1 / n
        new_sigma = T2 / n - np.outer(new_mu, new_mu)
        new_sigma = (new_sigma + new_sigma.T) / 2
        delta = max(
            np.max(np.abs(new_mu - mu) / (np.abs(mu) + tol)),
            np.max(np.abs(new_sigma - sigma) / (np.abs(sigma) + tol)),
        )
        mu, sigma = new_mu, new_sigma
        history.append(observed_loglik(Y, mask, mu, sigma))
        if history[-1] < history[-2] - 1e-8 * (1.0 + abs(history[-2])):
            raise ConvergenceError(
                "EM observed-data log-likelihood decreased",
                {"iteration": it, "loglik": history[-2:]},
            )
        if delta < tol:
            return MVNFit(mu, sigma, it, history)
    raise ConvergenceError(
        f"EM did not converge in {max_iter} iterations", {"iteration": max_iter, "last_change": float(delta)}
    )


def fit_conditions(values, mask, d: Design, cfg: EngineConfig) -> list[MVNFit]:
    return [
        em_mvn(values[:, d.columns_of(k)], mask[:, d.columns_of(k)], cfg.tol, cfg.em_max_iter)
        for k in range(d.n_conditions)
    ]


def draw_missing(Y, mask, fit: MVNFit, rng, deterministic=False) -> np.ndarray:
    out = np.where(mask, Y, np.nan)
    for rows, obs in _patterns(mask):
        if obs.all():
            continue
        mean, cov = _conditional(fit.mu, fit.sigma, obs, Y[np.ix_(rows, obs)])
        if not deterministic:
            try:
                c = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                c = np.linalg.cholesky(_ridge(cov))
            mean = mean + rng.standard_normal(mean.shape) @ c.T
        out[np.ix_(rows, ~obs)] = mean
    return out


def impute_mle(values, mask, d: Design, cfg: EngineConfig, rng, params=None) -> np.ndarray:
    if params is None:
        params = fit_conditions(values, mask, d, cfg)
    out = np.where(mask, values, np.nan)
    for k, fit in enumerate(params):
        cols = d.columns_of(k)
        out[:, cols] = draw_missing(values[:, cols], mask[:, cols], fit, rng, cfg.mle_deterministic)
    return out


def engine_mle(m: IntensityMatrix, d: Design, cfg: EngineConfig, stream) -> IntensityMatrix:
    d = d.aligned_to(m)
    filled = impute_mle(m.values, m.mask, d, cfg, stream)
    return m.replace(values=filled, mask=np.ones(m.shape, dtype=bool))
