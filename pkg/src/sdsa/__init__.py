"""Spatial-distribution-shift-aware knowledge-guided flux and yield models."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
