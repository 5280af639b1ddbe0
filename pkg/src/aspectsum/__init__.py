"""Aspect-centric, attributable extractive summaries of product reviews."""

__version__ = "0.1.0"
