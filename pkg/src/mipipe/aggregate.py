"""Peptide to protein roll-up of imputed stacks."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .datamodel import IntensityMatrix
from .impute import ImputedStack

SEPARATOR = ";"


def filter_unique(m: IntensityMatrix, sep: str = SEPARATOR) -> IntensityMatrix:
    """Drop peptides shared between proteins (accession lists joined by ``sep``)."""
    if m.protein_ids is None:
        raise ValueError("matrix carries no protein ids")
    keep = [i for i, p in enumerate(m.protein_ids) if p.strip() and sep not in p]
    return m.take_rows(keep)


def protein_groups(protein_ids) -> dict[str, np.ndarray]:
    """Accession -> row indices, in order of first appearance."""
    groups: dict[str, list[int]] = {}
    for i, p in enumerate(protein_ids):
        groups.setdefault(p, []).append(i)
    return {p: np.array(rows) for p, rows in groups.items()}


def sum_log2(values: np.ndarray, groups: dict[str, np.ndarray]) -> np.ndarray:
    """log2 of the raw-scale sum over each group's rows, per column."""
    out = np.empty((len(groups), values.shape[1]))
    for g, rows in enumerate(groups.values()):
        block = values[rows]
        top = block.max(axis=0)
        out[g] = top + np.log2(np.exp2(block - top).sum(axis=0))
    return out


def aggregate_matrix(m: IntensityMatrix) -> IntensityMatrix:
    if not m.is_complete:
        raise ValueError("aggregation needs complete (imputed) data")
    if m.protein_ids is None:
        raise ValueError("matrix carries no protein ids")
    if any(SEPARATOR in p for p in m.protein_ids):
        raise ValueError("non-unique peptides present; run filter_unique first")
    groups = protein_groups(m.protein_ids)
    vals = sum_log2(m.values, groups)
    names = list(groups)
    return IntensityMatrix(names, m.col_ids, vals, np.ones(vals.shape, dtype=bool), names)


def aggregate_sum(stack: ImputedStack) -> ImputedStack:
    return replace(stack, draws=tuple(aggregate_matrix(dr) for dr in stack.draws))
