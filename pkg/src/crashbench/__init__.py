"""Streaming evaluation and explainability toolkit for collision anticipation."""

__version__ = "0.1.0"
