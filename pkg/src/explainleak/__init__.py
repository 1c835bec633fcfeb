"""Membership inference through feature-attribution explanations."""

__version__ = "0.1.0"
