"""Core data carriers and CSV (de)serialization.

In memory the boolean mask is authoritative: unobserved cells hold NaN in
``values`` but every consumer must go through ``mask``. The ``NA`` token only
exists on disk.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

NA_TOKEN = "NA"


class ParseError(ValueError):
    """Malformed input file; the message names the offending row/column."""


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ParseError(f"duplicate {what} id: {i!r}")
        seen.add(i)


@dataclass(frozen=True)
class IntensityMatrix:
    """P x N matrix of log-intensities with an explicit observation mask."""

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray
    protein_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
        object.__setattr__(self, "col_ids", tuple(str(c) for c in self.col_ids))
        if self.protein_ids is not None:
            object.__setattr__(self, "protein_ids", tuple(str(p) for p in self.protein_ids))
        if values.ndim != 2 or values.shape != mask.shape:
            raise ValueError(f"values {values.shape} and mask {mask.shape} disagree")
        P, N = values.shape
        if len(self.row_ids) != P or len(self.col_ids) != N:
            raise ValueError("id lists do not match matrix dimensions")
        if self.protein_ids is not None and len(self.protein_ids) != P:
            raise ValueError("protein_ids length does not match row count")
        _check_unique(self.row_ids, "row")
        _check_unique(self.col_ids, "column")
        if not np.all(np.isfinite(values[mask])):
            i, j = np.argwhere(mask & ~np.isfinite(values))[0]
            raise ValueError(f"non-finite observed value at row {self.row_ids[i]!r}, column {self.col_ids[j]!r}")
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_array(cls, values, row_ids=None, col_ids=None, protein_ids=None) -> "IntensityMatrix":
        """Build from an array where NaN marks missing cells."""
        values = np.asarray(values, dtype=float)
        P, N = values.shape
        row_ids = row_ids if row_ids is not None else [f"r{i + 1}" for i in range(P)]
        col_ids = col_ids if col_ids is not None else [f"s{j + 1}" for j in range(N)]
        return cls(row_ids, col_ids, values, ~np.isnan(values), protein_ids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_missing(self) -> int:
        return int((~self.mask).sum())

    @property
    def missing_fraction(self) -> float:
        return self.n_missing / self.mask.size

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def replace(self, values=None, mask=None, **kw) -> "IntensityMatrix":
        return IntensityMatrix(
            kw.get("row_ids", self.row_ids),
            kw.get("col_ids", self.col_ids),
            self.values if values is None else values,
            self.mask if mask is None else mask,
            kw.get("protein_ids", self.protein_ids),
        )

    def take_rows(self, idx) -> "IntensityMatrix":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        prot = None if self.protein_ids is None else [self.protein_ids[i] for i in idx]
        return IntensityMatrix(
            [self.row_ids[i] for i in idx], self.col_ids, self.values[idx], self.mask[idx], prot
        )

    def take_cols(self, idx) -> "IntensityMatrix":
        idx = np.asarray(idx)
        return IntensityMatrix(
            self.row_ids, [self.col_ids[j] for j in idx], self.values[:, idx], self.mask[:, idx], self.protein_ids
        )


@dataclass(frozen=True)
class Design:
    """Sample-to-condition assignment and its cell-means design matrix."""

    samples: tuple[str, ...]
    labels: tuple[str, ...]
    conditions: tuple[str, ...] = field(default=())

    def __post_init__(self):
        samples = tuple(str(s) for s in self.samples)
        labels = tuple(str(c) for c in self.labels)
        if len(samples) != len(labels):
            raise ValueError("samples and labels differ in length")
        _check_unique(samples, "sample")
        conditions = tuple(self.conditions) or tuple(dict.fromkeys(labels))
        unknown = set(labels) - set(conditions)
        if unknown:
            raise ValueError(f"labels not among conditions: {sorted(unknown)}")
        for c in conditions:
            n = labels.count(c)
            if n < 2:
                raise ValueError(f"condition {c!r} has {n} sample(s); at least 2 required")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "conditions", conditions)

    @classmethod
    def from_groups(cls, sizes: Sequence[int], prefix: str = "s") -> "Design":
        """Consecutive blocks of samples, conditions named c1, c2, ..."""
        labels = [f"c{k + 1}" for k, n in enumerate(sizes) for _ in range(n)]
        return cls([f"{prefix}{j + 1}" for j in range(len(labels))], labels)

    @property
    def condition_of(self) -> dict[str, str]:
        return dict(zip(self.samples, self.labels))

    @property
    def n_conditions(self) -> int:
        return len(self.conditions)

    @property
    def group_index(self) -> np.ndarray:
        pos = {c: k for k, c in enumerate(self.conditions)}
        return np.array([pos[c] for c in self.labels])

    @property
    def X(self) -> np.ndarray:
        X = np.zeros((len(self.samples), self.n_conditions))
        X[np.arange(len(self.samples)), self.group_index] = 1.0
        return X

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_index, minlength=self.n_conditions).astype(float)

    @property
    def XtX(self) -> np.ndarray:
        return np.diag(self.group_sizes)

    @property
    def residual_df(self) -> int:
        return len(self.samples) - self.n_conditions

    def columns_of(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.group_index == k)

    def index(self, condition: str) -> int:
        try:
            return self.conditions.index(condition)
        except ValueError:
            raise KeyError(f"unknown condition {condition!r}") from None

    def aligned_to(self, m: IntensityMatrix) -> "Design":
        """Reorder to the matrix column order; sample sets must coincide."""
        if set(m.col_ids) != set(self.samples):
            missing = sorted(set(m.col_ids) ^ set(self.samples))
            raise ValueError(f"matrix and design sample ids differ: {missing}")
        cond = self.condition_of
        return Design(m.col_ids, [cond[s] for s in m.col_ids], self.conditions)


@dataclass(frozen=True)
class Contrast:
    a: int
    b: int

    def check(self, design: Design) -> None:
        I = design.n_conditions
        if self.a == self.b or not (0 <= self.a < I and 0 <= self.b < I):
            raise ValueError(f"invalid contrast ({self.a}, {self.b}) for {I} conditions")

    def label(self, design: Design) -> str:
        return f"{design.conditions[self.a]}-{design.conditions[self.b]}"


def all_pairs(design: Design) -> list[Contrast]:
    I = design.n_conditions
    return [Contrast(a, b) for a in range(I) for b in range(a + 1, I)]


def format_float(x: float) -> str:
    if math.isnan(x):
        return NA_TOKEN
    return repr(float(x)) if math.isinf(x) else f"{x:.17g}"


def read_matrix(path, protein_column: bool = False) -> IntensityMatrix:
    """Read a CSV: row id, optional protein id, then one column per sample."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    lead = 2 if protein_column else 1
    if len(header) <= lead:
        raise ParseError(f"{path}: header has no sample columns")
    col_ids = header[lead:]
    _check_unique(col_ids, "column")
    N = len(col_ids)
    values = np.full((len(body), N), np.nan)
    mask = np.zeros((len(body), N), dtype=bool)
    row_ids, prot = [], []
    for i, r in enumerate(body):
        if len(r) != N + lead:
            raise ParseError(f"{path}: line {i + 2} has {len(r)} fields, expected {N + lead}")
        row_ids.append(r[0])
        if protein_column:
            prot.append(r[1])
        for j, cell in enumerate(r[lead:]):
            cell = cell.strip()
            if cell == "" or cell == NA_TOKEN:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric value {cell!r} at row {r[0]!r}, column {col_ids[j]!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: non-finite value at row {r[0]!r}, column {col_ids[j]!r}")
            values[i, j] = v
            mask[i, j] = True
    _check_unique(row_ids, "row")
    return IntensityMatrix(row_ids, col_ids, values, mask, prot if protein_column else None)


def write_matrix(m: IntensityMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        lead = ["row_id"] + (["protein_id"] if m.protein_ids is not None else [])
        w.writerow(lead + list(m.col_ids))
        for i, rid in enumerate(m.row_ids):
            cells = [format_float(v) if ok else NA_TOKEN for v, ok in zip(m.values[i], m.mask[i])]
            w.writerow([rid] + ([m.protein_ids[i]] if m.protein_ids is not None else []) + cells)


def read_design(path) -> Design:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and [c.strip().lower() for c in rows[0][:2]] == ["sample", "condition"]:
        rows = rows[1:]
    samples, labels = [], []
    for i, r in enumerate(rows):
        if len(r) != 2:
            raise ParseError(f"{path}: line {i + 1} must have 2 fields")
        samples.append(r[0].strip())
        labels.append(r[1].strip())
    try:
        return Design(samples, labels)
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from None


def write_design(d: Design, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "condition"])
        w.writerows(zip(d.samples, d.labels))
