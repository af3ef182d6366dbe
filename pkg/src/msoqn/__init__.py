"""Quasi-Newton multi-start optimization: sequential, coupled-batched and decoupled-batched schemes."""

__version__ = "0.1.0"
