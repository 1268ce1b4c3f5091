"""Validated KAM normalization for a controlled magnetic field-line model."""
from .interval import Interval, iv, iv_from_decimal

__version__ = "0.1.0"

__all__ = ["Interval", "iv", "iv_from_decimal", "__version__"]
