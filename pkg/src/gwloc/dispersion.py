"""Dispersion curves for guided-wave modes.

Each propagating mode maps angular frequency to a wavenumber. Two closed-form
curve families are supported: a nondispersive linear curve (constant phase
speed, symmetric-mode-like) and a square-root curve (flexural,
antisymmetric-mode-like). A dimensionless scale factor ``alpha`` multiplies
every curve to model environmental uncertainty in the material.
"""

from dataclasses import dataclass, field

import numpy as np

ALPHA_MIN = 0.7
ALPHA_MAX = 1.3

_MAX_ALPHA_REJECTIONS = 10_000


@dataclass(frozen=True)
class ModeCurve:
    """One mode's wavenumber-vs-frequency curve.

    kind "linear": wavenumber = omega / c, with c the phase speed [m/s].
    kind "sqrt":   wavenumber = sqrt(omega / d), with d the flexural
                   coefficient [m^2/s].

    Both satisfy wavenumber(0) = 0 and are strictly increasing in omega.
    """

    kind: str
    c: float | None = None
    d: float | None = None

    def __post_init__(self):
        if self.kind == "linear":
            if self.c is None or self.c <= 0:
                raise ValueError("linear mode needs phase speed c > 0")
        elif self.kind == "sqrt":
            if self.d is None or self.d <= 0:
                raise ValueError("sqrt mode needs flexural coefficient d > 0")
        else:
            raise ValueError(f"unknown mode kind {self.kind!r}")

    def wavenumber(self, omega):
        """Unscaled wavenumber [rad/m] at angular frequency omega [rad/s]."""
        if self.kind == "linear":
            return omega / self.c
        return np.sqrt(omega / self.d)


@dataclass(frozen=True)
class DispersionModel:
    """An ordered set of mode curves plus the uncertainty scale factor.

    The effective wavenumber of every mode is alpha * curve(omega); alpha
    stays within [0.7, 1.3] by construction.
    """

    modes: tuple[ModeCurve, ...] = field(default_factory=tuple)
    alpha: float = 1.0

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ValueError("at least one mode is required")
        if not (ALPHA_MIN <= self.alpha <= ALPHA_MAX):
            raise ValueError(f"alpha {self.alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
        object.__setattr__(self, "modes", tuple(self.modes))


def default_model(alpha: float = 1.0) -> DispersionModel:
    """Default two-mode set: one nearly nondispersive, one strongly dispersive."""
    return DispersionModel(
        modes=(ModeCurve(kind="linear", c=5400.0), ModeCurve(kind="sqrt", d=0.25)),
        alpha=alpha,
    )


def wavenumber(model: DispersionModel, mode_index: int, omega):
    """Effective wavenumber alpha * curve(omega), vectorized over omega.

    omega must be >= 0 (the curve passes through the origin).
    """
    if not 0 <= mode_index < len(model.modes):
        raise IndexError(f"mode index {mode_index} out of range")
    if np.any(np.asarray(omega) < 0):
        raise ValueError("omega must be >= 0")
    return model.alpha * model.modes[mode_index].wavenumber(omega)


def group_velocity(model: DispersionModel, mode_index: int, omega):
    """Wave-packet speed d(omega)/d(wavenumber) in closed form [m/s].

    Linear curve: c / alpha. Square-root curve: (2 / alpha) * sqrt(d * omega).
    omega must be strictly positive; the sqrt curve's group velocity vanishes
    at DC and is rejected to avoid downstream division by zero.
    """
    if not 0 <= mode_index < len(model.modes):
        raise IndexError(f"mode index {mode_index} out of range")
    omega_arr = np.asarray(omega, dtype=np.float64)
    if np.any(omega_arr <= 0):
        raise ValueError("omega must be > 0")
    curve = model.modes[mode_index]
    if curve.kind == "linear":
        out = np.full_like(omega_arr, curve.c / model.alpha)
    else:
        out = (2.0 / model.alpha) * np.sqrt(curve.d * omega_arr)
    return float(out) if omega_arr.ndim == 0 else out


def wavenumber_table(model: DispersionModel, omegas: np.ndarray) -> np.ndarray:
    """Effective wavenumbers for all modes on a frequency grid.

    omegas: (Q,) angular frequencies, omegas[0] may be the DC bin.
    Returns (n_modes, Q) float64.
    """
    omegas = np.asarray(omegas, dtype=np.float64)
    if np.any(omegas < 0):
        raise ValueError("omega must be >= 0")
    return np.stack([model.alpha * mode.wavenumber(omegas) for mode in model.modes])


def sample_alpha(seed) -> float:
    """Draw the dispersion scale factor: N(1, 1) rejection-sampled into [0.7, 1.3].

    Deterministic given the seed; accepts an int seed or a numpy Generator.
    """
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_ALPHA_REJECTIONS):
        value = rng.normal(1.0, 1.0)
        if ALPHA_MIN <= value <= ALPHA_MAX:
            return float(value)
    raise RuntimeError("alpha rejection sampler exceeded its iteration cap")
