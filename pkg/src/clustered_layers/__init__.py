"""Clustered concentration layers for anisotropic elliptic problems."""

__version__ = "0.1.0"
