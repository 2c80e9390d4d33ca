"""Correlation filtering with random-matrix tools and nested clustered portfolios."""

__version__ = "0.1.0"
