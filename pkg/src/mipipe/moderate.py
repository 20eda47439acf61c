"""Variance projection, empirical-Bayes prior fit and variance moderation.

The prior on the row variances is a scaled inverse chi-square with
``d0`` degrees of freedom and scale ``s0_sq``; its hyperparameters are fitted
by matching the first two moments of ``log s^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Design
from .pool import PooledFit
from .specfun import digamma, trigamma, trigamma_inverse


@dataclass(frozen=True)
class ModerationFit:
    d0: float
    s0_sq: float
    s_tilde_sq: np.ndarray
    df_total: float


def project_variance(pooled: PooledFit, d: Design) -> np.ndarray:
    """max over k of Sigma_p[k, k] * (X'X)[k, k].

    For an OLS covariance ``s^2 inv(X'X)`` this returns ``s^2``.
    """
    diag = np.diagonal(pooled.sigma, axis1=1, axis2=2)
    return np.max(diag * d.group_sizes[None, :], axis=1)


def fit_eb_prior(s_sq, df: float) -> tuple[float, float]:
    """Moment estimates ``(d0, s0_sq)``; zero variances are left out."""
    s_sq = np.asarray(s_sq, dtype=float)
    use = s_sq[np.isfinite(s_sq) & (s_sq > 0)]
    if use.size < 2:
        raise ValueError(f"need at least 2 positive variances to fit the prior, got {use.size}")
    half = df / 2.0
    e = np.log(use) - digamma(half) + np.log(half)
    e_mean = e.mean()
    excess = np.sum((e - e_mean) ** 2) / (use.size - 1) - trigamma(half)
    if excess > 0:
        d0 = 2.0 * trigamma_inverse(excess)
        s0_sq = float(np.exp(e_mean + digamma(d0 / 2.0) - np.log(d0 / 2.0)))
    else:
        d0 = np.inf
        s0_sq = float(np.exp(e_mean))
    return float(d0), s0_sq


def moderate_variance(s_sq, df: float, d0: float, s0_sq: float) -> np.ndarray:
    s_sq = np.asarray(s_sq, dtype=float)
    if np.isinf(d0):
        return np.full_like(s_sq, s0_sq)
    return (df * s_sq + d0 * s0_sq) / (df + d0)


def moderate(s_sq, df: float) -> ModerationFit:
    d0, s0_sq = fit_eb_prior(s_sq, df)
    return ModerationFit(d0, s0_sq, moderate_variance(s_sq, df, d0, s0_sq), df + d0)
