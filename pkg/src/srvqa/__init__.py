"""Temporal-inconsistency guided quality assessment for super-resolved video."""

__version__ = "0.1.0"
