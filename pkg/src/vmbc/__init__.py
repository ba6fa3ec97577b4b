"""Voter models with bias and cooperation: exact simulation and analysis."""
from ._backend import BACKEND

__version__ = "0.1.0"
