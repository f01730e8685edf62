"""Guided-wave damage localization toolkit.

Simulates dispersive far-field guided-wave records on a sensorized plate,
localizes point damage with either a physical-model correlation search or a
trained fully-connected network, and sweeps localization error over SNR.
"""

__version__ = "0.1.0"

from gwloc.errors import (
    DegenerateSignalError,
    FormatError,
    GeometryError,
    GwlocError,
    TrainingError,
)

__all__ = [
    "DegenerateSignalError",
    "FormatError",
    "GeometryError",
    "GwlocError",
    "TrainingError",
    "__version__",
]
