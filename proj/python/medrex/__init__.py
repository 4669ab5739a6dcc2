"""Hybrid treatment-problem relation extraction toolkit."""

from ._medrex import *  # noqa: F401,F403

__version__ = "0.1.0"
