"""Faithfulness and stability benchmark for skeleton attribution maps."""

__version__ = "0.1.0"
