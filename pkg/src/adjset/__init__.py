"""Data-driven covariate adjustment for one or more treatments."""

__version__ = "0.1.0"
