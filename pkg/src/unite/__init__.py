"""Uncertainty-driven iterative corpus sampling for retriever adaptation."""

__version__ = "0.1.0"
