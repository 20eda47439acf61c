"""Multiple-imputation differential analysis for incomplete intensity matrices."""

__version__ = "0.1.0"
