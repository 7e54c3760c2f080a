"""Dual-loop microwave delivery: field engine, crosstalk cancellation and spin response."""

__version__ = "0.1.0"
