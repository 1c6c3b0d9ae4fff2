"""Simulation and verification toolkit for the Togashi-Kaneko network and its constrained Langevin approximation."""
from .model import ModelParams, derive_params
from .path import SampledPath

__version__ = "0.1.0"
__all__ = ["ModelParams", "derive_params", "SampledPath"]
