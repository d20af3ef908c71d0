"""Discrete Feynman-Kac approximations of the parabolic Anderson model
driven by a fractional Brownian sheet."""
from .errors import CapacityError, NumericalError, PamfkError, ValidationError, WindowError
from .noise import ModelParams, NoiseGrid

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "NoiseGrid",
    "PamfkError",
    "ValidationError",
    "WindowError",
    "CapacityError",
    "NumericalError",
]
