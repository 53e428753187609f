"""Structural state translation toolkit."""
__version__ = "0.1.0"
