"""Hugging Face model adapter for the sampling core's file protocol."""

__version__ = "0.1.0"
