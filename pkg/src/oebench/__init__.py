"""Outlier-exposure anomaly detection benchmark on a small numpy autodiff stack."""

__version__ = "0.1.0"
