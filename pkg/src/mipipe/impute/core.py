from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..datamodel import Design, IntensityMatrix, read_matrix, write_matrix
from ..preprocess import presence_counts
from ..rng import stream

log = logging.getLogger(__name__)

METHODS = ("knn", "mle", "norm", "pca", "rf")
# engines whose output does not depend on the random stream
DETERMINISTIC = {"knn", "pca"}


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class EngineConfig:
    method: str = "mle"
    k_neighbors: int = 10
    n_components: int = 2
    rf_trees: int = 100
    max_iter: int = 10
    tol: float = 1e-4
    em_max_iter: int = 1000
    mle_deterministic: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown imputation method {self.method!r}; choose from {METHODS}")
        for name in ("k_neighbors", "n_components", "rf_trees", "max_iter", "em_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")

    @property
    def deterministic(self) -> bool:
        return self.method in DETERMINISTIC or (self.method == "mle" and self.mle_deterministic)


def draw_count_rule(missing_fraction: float) -> int:
    """Rule of thumb: as many draws as the percentage of missing values."""
    if not 0.0 <= missing_fraction < 1.0:
        raise ValueError("missing fraction must lie in [0, 1)")
    return int(round(100 * missing_fraction))


def choose_draw_count(missing_fraction: float) -> int:
    # pooling needs D >= 2 (the between-draw term divides by D - 1)
    return max(2, draw_count_rule(missing_fraction))


@dataclass(frozen=True)
class ImputedStack:
    draws: tuple[IntensityMatrix, ...]
    method: str
    seed: int
    config: EngineConfig = field(default_factory=EngineConfig)
    missing_fraction: float = 0.0

    @property
    def D(self) -> int:
        return len(self.draws)

    @property
    def deterministic(self) -> bool:
        return self.config.deterministic

    def array(self) -> np.ndarray:
        """D x P x N array of completed values."""
        return np.stack([d.values for d in self.draws])

    @property
    def identical_draws(self) -> bool:
        a = self.array()
        return bool(np.all(a == a[0]))


def _check_presence(m: IntensityMatrix, d: Design) -> None:
    counts = presence_counts(m, d)
    bad = np.argwhere(counts == 0)
    if bad.size:
        i, k = bad[0]
        raise ValueError(
            f"row {m.row_ids[i]!r} has no observed value in condition {d.conditions[k]!r}; filter before imputing"
        )


def _engine(method):
    from . import knn, mle, norm, pca, rf

    return {
        "knn": knn.impute_knn,
        "mle": mle.impute_mle,
        "norm": norm.impute_norm,
        "pca": pca.impute_pca,
        "rf": rf.impute_rf,
    }[method]


def impute_multiple(
    m: IntensityMatrix, d: Design, D: int, cfg: EngineConfig, seed: int, threads: int = 1
) -> ImputedStack:
    """Run one engine ``D`` times, draw ``i`` on stream ``(seed, "impute", method, i)``."""
    if D < 1:
        raise ValueError("D must be >= 1")
    d = d.aligned_to(m)
    _check_presence(m, d)
    frac = m.missing_fraction
    if m.is_complete:
        return ImputedStack(tuple(m for _ in range(D)), cfg.method, seed, cfg, 0.0)

    engine = _engine(cfg.method)
    shared = {}
    if cfg.method == "mle":
        from .mle import fit_conditions

        # the EM fit is deterministic; only the conditional draws use the stream
        shared["params"] = fit_conditions(m.values, m.mask, d, cfg)

    def run(i):
        filled = engine(m.values, m.mask, d, cfg, stream(seed, "impute", cfg.method, i), **shared)
        filled = np.where(m.mask, m.values, filled)
        if not np.all(np.isfinite(filled)):
            raise ConvergenceError(f"{cfg.method} engine left undefined entries in draw {i}")
        return m.replace(values=filled, mask=np.ones(m.shape, dtype=bool))

    if threads > 1 and D > 1:
        with ThreadPoolExecutor(threads) as ex:
            draws = tuple(ex.map(run, range(D)))
    else:
        draws = tuple(run(i) for i in range(D))
    return ImputedStack(draws, cfg.method, seed, cfg, frac)


def write_stack(stack: ImputedStack, directory, stem: str = "draw") -> Path:
    """One CSV per draw plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, draw in enumerate(stack.draws):
        name = f"{stem}_{i + 1:03d}.csv"
        write_matrix(draw, directory / name)
        files.append(name)
    manifest = {
        "method": stack.method,
        "seed": stack.seed,
        "D": stack.D,
        "config": asdict(stack.config),
        "missing_fraction": stack.missing_fraction,
        "draw_rule": draw_count_rule(stack.missing_fraction),
        "protein_column": stack.draws[0].protein_ids is not None,
        "files": files,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_stack(manifest_path) -> ImputedStack:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    meta = json.loads(manifest_path.read_text())
    draws = tuple(
        read_matrix(manifest_path.parent / f, protein_column=meta.get("protein_column", False)) for f in meta["files"]
    )
    if any(not dr.is_complete for dr in draws):
        raise ValueError(f"{manifest_path}: stack draws must be complete")
    return ImputedStack(draws, meta["method"], meta["seed"], EngineConfig(**meta["config"]), meta["missing_fraction"])
