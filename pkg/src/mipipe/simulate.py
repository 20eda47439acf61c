"""Simulation designs with ground-truth labels, and MCAR amputation.

Gaussian parameters are (mean, sd). Random draws for row ``i`` of design
``k`` come from ``stream(seed, "sim", k, i)`` so generation is independent of
evaluation order.

* design 1: 200 x 10, two groups of 5. Cells ~ N(100, 1); rows 1-10 get
  N(200, 1) in group 2.
* design 2: 1000 x 20, two groups of 10. ``y = P_i + G_ik + e`` with
  ``P_i ~ N(1.5, .5)`` and ``G_i2 ~ N(1.5, .5)`` for rows 1-200 (else 0),
  both drawn once per row; ``e ~ N(0, .5)`` per cell.
* design 3: as design 2 but ``P``, ``G`` and ``e`` redrawn for every cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Design, IntensityMatrix
from .rng import stream

DESIGNS = {
    # design_id: (P, group size, number of DE rows)
    1: (200, 5, 10),
    2: (1000, 10, 200),
    3: (1000, 10, 200),
}


@dataclass(frozen=True)
class SimTruth:
    de_rows: np.ndarray

    @property
    def n_de(self) -> int:
        return int(np.sum(self.de_rows))


@dataclass(frozen=True)
class SimSpec:
    design_id: int
    seed: int

    def __post_init__(self):
        if self.design_id not in DESIGNS:
            raise ValueError(f"unknown simulation design {self.design_id}")

    def generate(self):
        return GENERATORS[self.design_id](self.seed)


def _assemble(values: np.ndarray, n_de: int):
    P, N = values.shape
    design = Design.from_groups([N // 2, N // 2])
    m = IntensityMatrix.from_array(values, row_ids=[f"row{i + 1}" for i in range(P)], col_ids=design.samples)
    truth = np.zeros(P, dtype=bool)
    truth[:n_de] = True
    return m, design, SimTruth(truth)


def gen_sim1(seed: int):
    P, n, n_de = DESIGNS[1]
    y = np.empty((P, 2 * n))
    for i in range(P):
        rng = stream(seed, "sim", 1, i)
        shift = 100.0 if i < n_de else 0.0
        y[i, :n] = rng.normal(100.0, 1.0, n)
        y[i, n:] = rng.normal(100.0 + shift, 1.0, n)
    return _assemble(y, n_de)


def gen_sim2(seed: int):
    P, n, n_de = DESIGNS[2]
    y = np.empty((P, 2 * n))
    for i in range(P):
        rng = stream(seed, "sim", 2, i)
        peptide = rng.normal(1.5, 0.5)
        group = rng.normal(1.5, 0.5) if i < n_de else 0.0
        noise = rng.normal(0.0, 0.5, 2 * n)
        y[i, :n] = peptide + noise[:n]
        y[i, n:] = peptide + group + noise[n:]
    return _assemble(y, n_de)


def gen_sim3(seed: int):
    P, n, n_de = DESIGNS[3]
    y = np.empty((P, 2 * n))
    for i in range(P):
        rng = stream(seed, "sim", 3, i)
        peptide = rng.normal(1.5, 0.5, 2 * n)
        group = rng.normal(1.5, 0.5, n) if i < n_de else np.zeros(n)
        noise = rng.normal(0.0, 0.5, 2 * n)
        y[i] = peptide + noise
        y[i, n:] += group
    return _assemble(y, n_de)


GENERATORS = {1: gen_sim1, 2: gen_sim2, 3: gen_sim3}


def generate(design_id: int, seed: int):
    return SimSpec(design_id, seed).generate()


def ampute_mcar(m: IntensityMatrix, proportion: float, seed: int, max_retries: int = 1000) -> IntensityMatrix:
    """Mask exactly ``round(proportion * P * N)`` extra observed cells, uniformly.

    A selection that would leave a row with no observed value has the
    offending cells redrawn from the remaining candidates; after
    ``max_retries`` rounds the amputation fails.
    """
    if not 0.0 <= proportion < 1.0:
        raise ValueError("proportion must lie in [0, 1)")
    P, N = m.shape
    target = int(round(proportion * P * N))
    if target == 0:
        return m
    observed = np.flatnonzero(m.mask.ravel())
    if target > observed.size - P:
        raise ValueError(f"cannot remove {target} cells while keeping one observed value per row")
    rng = stream(seed, "ampute")
    chosen = rng.choice(observed, size=target, replace=False)
    mask = m.mask.copy().ravel()
    for _ in range(max_retries + 1):
        mask_try = mask.copy()
        mask_try[chosen] = False
        per_row = mask_try.reshape(P, N).sum(axis=1)
        empty = np.flatnonzero(per_row == 0)
        if empty.size == 0:
            return m.replace(mask=mask_try.reshape(P, N))
        # give each emptied row back one cell; draw replacements elsewhere
        rows_of = chosen // N
        drop = np.array([np.flatnonzero(rows_of == r)[0] for r in empty])
        keep = np.delete(chosen, drop)
        pool = np.setdiff1d(observed, chosen, assume_unique=True)
        pool = pool[np.isin(pool // N, empty, invert=True)]
        if pool.size < drop.size:
            break
        chosen = np.concatenate([keep, rng.choice(pool, size=drop.size, replace=False)])
    raise RuntimeError(f"amputation at {proportion:.0%} could not avoid fully missing rows after {max_retries} retries")
