"""Exception types raised by fodkit.

Every error carries a short machine-readable ``code`` that the CLI copies
into its one-line stderr report.
"""


class FodkitError(ValueError):
    code = "invalid"


class FormatError(FodkitError):
    """A file could not be parsed or violates its format contract."""

    code = "format"


class ShapeError(FodkitError):
    """Inputs have incompatible dimensions or lengths."""

    code = "shape"


class EmptyRegionError(FodkitError):
    """A mask or ROI selects no voxels where at least one is required."""

    code = "empty"


class DegenerateInputError(FodkitError):
    """A statistic is undefined for the given data (zero variance, constant input)."""

    code = "degenerate"
