"""Exception types shared across the package."""


class GwlocError(Exception):
    """Base class for all gwloc-specific failures."""


class GeometryError(GwlocError, ValueError):
    """Scene geometry violates a constraint (out of plate, path too short)."""


class DegenerateSignalError(GwlocError, ValueError):
    """An all-zero signal where noise calibration needs signal power."""


class FormatError(GwlocError, ValueError):
    """A GWDS/GWNN file is corrupt, truncated, or has the wrong magic."""


class TrainingError(GwlocError, RuntimeError):
    """Training diverged (non-finite loss)."""
