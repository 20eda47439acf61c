"""Multiple imputation: five engines behind one entry point."""
from .core import (
    ConvergenceError,
    EngineConfig,
    ImputedStack,
    choose_draw_count,
    draw_count_rule,
    impute_multiple,
    read_stack,
    write_stack,
)
from .knn import engine_knn
from .mle import engine_mle
from .norm import engine_norm
from .pca import engine_pca
from .rf import engine_rf

__all__ = [
    "ConvergenceError",
    "EngineConfig",
    "ImputedStack",
    "choose_draw_count",
    "draw_count_rule",
    "impute_multiple",
    "read_stack",
    "write_stack",
    "engine_knn",
    "engine_mle",
    "engine_norm",
    "engine_pca",
    "engine_rf",
]
