"""Random Forest permutation-importance confidence intervals with missing data."""

__version__ = "0.1.0"
