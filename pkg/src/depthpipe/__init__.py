"""Depth-sequence action recognition pipeline: STDN, MDMMs, VLAD encoding, linear SVMs and score fusion."""

__version__ = "0.1.0"
