"""Per-draw cell-means OLS fits and their combination by Rubin's rules."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datamodel import Design, IntensityMatrix


class DegenerateStackWarning(UserWarning):
    """All draws identical: the between-imputation covariance is zero."""


@dataclass(frozen=True)
class DrawFit:
    beta: np.ndarray  # P x I group means
    resid_var: np.ndarray  # P, RSS / (N - I)
    W: np.ndarray  # P x I x I, resid_var * inv(X'X)
    df_resid: int


@dataclass(frozen=True)
class PooledFit:
    beta: np.ndarray  # P x I
    sigma: np.ndarray  # P x I x I
    df_resid: int
    D: int


def fit_values(Y: np.ndarray, d: Design) -> DrawFit:
    """OLS of every row of a complete ``P x N`` array on the cell-means design."""
    df = d.residual_df
    if df < 1:
        raise ValueError("no residual degrees of freedom (N - I = 0)")
    X = d.X
    n = d.group_sizes
    beta = (Y @ X) / n
    resid = Y - beta @ X.T
    s2 = np.einsum("pn,pn->p", resid, resid) / df
    W = s2[:, None, None] * np.diag(1.0 / n)[None]
    return DrawFit(beta, s2, W, df)


def fit_draw(m: IntensityMatrix, d: Design) -> DrawFit:
    if not m.is_complete:
        raise ValueError("fit_draw needs a complete matrix")
    return fit_values(m.values, d.aligned_to(m))


def _check(fits) -> None:
    if len(fits) < 2:
        raise ValueError(f"Rubin's rules need at least 2 draws, got {len(fits)}")
    shape = fits[0].beta.shape
    if any(f.beta.shape != shape or f.W.shape != fits[0].W.shape for f in fits):
        raise ValueError("draw fits have mismatched shapes")


def rubin_mean(fits) -> np.ndarray:
    _check(fits)
    return np.mean([f.beta for f in fits], axis=0)


def rubin_cov(fits, beta_bar: np.ndarray) -> np.ndarray:
    """Mean within-draw covariance plus (D+1)/(D(D-1)) times the summed outer
    products of the per-draw deviations from ``beta_bar``."""
    _check(fits)
    D = len(fits)
    within = np.mean([f.W for f in fits], axis=0)
    dev = np.stack([f.beta for f in fits]) - beta_bar  # D x P x I
    between = np.einsum("dpi,dpj->pij", dev, dev)
    return within + (D + 1) / (D * (D - 1)) * between


def pool(fits) -> PooledFit:
    beta = rubin_mean(fits)
    sigma = rubin_cov(fits, beta)
    return PooledFit(beta, sigma, fits[0].df_resid, len(fits))


def pool_stack(stack, d: Design) -> PooledFit:
    d = d.aligned_to(stack.draws[0])
    arr = stack.array()
    if stack.D >= 2 and np.all(arr == arr[0]):
        msg = f"all {stack.D} imputed draws are identical; between-imputation variance is zero"
        warnings.warn(msg, DegenerateStackWarning, stacklevel=2)
    return pool([fit_values(Y, d) for Y in arr])


def single_fit(fit: DrawFit) -> PooledFit:
    """View a single draw's OLS fit as a pooled fit with D = 1."""
    return PooledFit(fit.beta, fit.W, fit.df_resid, 1)
