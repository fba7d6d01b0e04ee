"""Desk-scale token-level vision/language embedding alignment."""

__version__ = "0.1.0"
