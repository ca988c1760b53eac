"""Ruling-shock estimation: sparse volatility mixtures, heteroskedasticity-identified
factors on event days and per-horizon local projections."""

__version__ = "0.1.0"
