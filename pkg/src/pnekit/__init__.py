"""Prescribed-null-expansion hypersurfaces in initial data sets."""

__version__ = "0.1.0"
