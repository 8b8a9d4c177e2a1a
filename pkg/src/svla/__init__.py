"""Desk-scale SCARA vision-language-action imitation-learning workbench."""

__version__ = "0.1.0"
