"""Evaluation toolkit for FOD enhancement.

Spherical-harmonic FOD volumes go in; fixel, FOD, connectome and group
statistics come out, plus a patch-wise enhancement pipeline with a
pluggable enhancer.
"""

__version__ = "0.1.0"

from .errors import (DegenerateInputError, EmptyRegionError, FodkitError, FormatError,  # noqa: E402
                     ShapeError)
from .types import ConnMatrix, FixelSet, GradientTable, Mask, SHVolume  # noqa: E402

__all__ = [
    "__version__",
    "FodkitError", "FormatError", "ShapeError", "EmptyRegionError", "DegenerateInputError",
    "SHVolume", "Mask", "GradientTable", "ConnMatrix", "FixelSet",
]
