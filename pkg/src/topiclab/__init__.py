"""Topic modeling engine and exploration service."""

__version__ = "0.1.0"
