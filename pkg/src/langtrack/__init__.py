"""Tracking-by-language over a deterministic synthetic shape world."""

__version__ = "0.1.0"
