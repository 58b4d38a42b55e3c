"""Coefficient asymptotics of rational generating functions near a lacuna."""

__version__ = "0.1.0"
