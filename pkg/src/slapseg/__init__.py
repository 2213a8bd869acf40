"""Desk-scale slap fingerprint segmentation toolkit."""

__version__ = "0.1.0"
