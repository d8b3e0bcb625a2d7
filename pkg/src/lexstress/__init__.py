"""Lexical stress error detection with attention-pooled prosodic features."""

__version__ = "0.1.0"
