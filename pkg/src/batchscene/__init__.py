"""Batched procedural scene generation."""

__version__ = "0.1.0"
