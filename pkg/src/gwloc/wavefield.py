"""Far-field wavefield synthesis for transmitter -> damage -> receiver paths.

Only the damage-scattered path is modeled (direct arrivals are assumed
baseline-subtracted): each sensor-pair column of the spectrum is a sum over
modes of a 1/sqrt(wavenumber * path) geometric-spreading amplitude and a
-wavenumber * path propagation phase. Spectra convert to fixed-length
time-domain records through a one-sided inverse transform.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from gwloc import kernels
from gwloc.dispersion import DispersionModel, wavenumber_table
from gwloc.errors import GeometryError

# minimum damage-to-sensor distance: keeps the 1/sqrt amplitude off its pole
R_MIN = 0.01


def ordered_pairs(n_sensors: int) -> tuple[tuple[int, int], ...]:
    """All ordered transmitter/receiver index pairs, no self-pairs."""
    return tuple(
        (tx, rx) for tx in range(n_sensors) for rx in range(n_sensors) if tx != rx
    )


@dataclass(frozen=True, eq=False)
class PlateScene:
    """Plate geometry: sensor coordinates, pair list, optional damage point.

    Sensor and damage coordinates live inside the [0, length] x [0, width]
    rectangle; the damage, when set, stays at least R_MIN away from every
    sensor. ``damage=None`` describes a bare sensor layout (a dataset's
    scene template).
    """

    length: float
    width: float
    sensors: np.ndarray  # (n_sensors, 2)
    pairs: tuple[tuple[int, int], ...]
    damage: tuple[float, float] | None = None

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise GeometryError("plate dimensions must be positive")
        sensors = np.asarray(self.sensors, dtype=np.float64)
        if sensors.ndim != 2 or sensors.shape[1] != 2 or sensors.shape[0] < 2:
            raise GeometryError("sensors must be an (m, 2) array with m >= 2")
        if np.any(sensors < 0) or np.any(sensors[:, 0] > self.length) or np.any(
            sensors[:, 1] > self.width
        ):
            raise GeometryError("sensor coordinates outside the plate")
        object.__setattr__(self, "sensors", sensors)
        pairs = tuple((int(tx), int(rx)) for tx, rx in self.pairs)
        n = sensors.shape[0]
        for tx, rx in pairs:
            if tx == rx or not (0 <= tx < n and 0 <= rx < n):
                raise GeometryError(f"invalid sensor pair ({tx}, {rx})")
        object.__setattr__(self, "pairs", pairs)
        if self.damage is not None:
            x, y = float(self.damage[0]), float(self.damage[1])
            if not (0 <= x <= self.length and 0 <= y <= self.width):
                raise GeometryError("damage outside the plate")
            dist = np.hypot(sensors[:, 0] - x, sensors[:, 1] - y)
            if np.min(dist) < R_MIN:
                raise GeometryError(
                    f"damage within {R_MIN} m of a sensor (min distance {np.min(dist):.4g})"
                )
            object.__setattr__(self, "damage", (x, y))

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def with_damage(self, point: tuple[float, float]) -> "PlateScene":
        return replace(self, damage=point)


@dataclass(frozen=True)
class FrequencyGrid:
    """Equally spaced one-sided frequency bins f_q = q * f_max / n_bins.

    Bin 0 is DC. Time-domain records sample at dt = 1 / (2 * f_max), i.e.
    twice the one-sided bandwidth, and keep n_bins samples.
    """

    n_bins: int
    f_max: float

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("need at least 2 frequency bins")
        if self.f_max <= 0:
            raise ValueError("f_max must be positive")

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * (self.f_max / self.n_bins)

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * math.pi * self.frequencies

    @property
    def dt(self) -> float:
        return 1.0 / (2.0 * self.f_max)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.dt


@dataclass(frozen=True)
class GaussianWindow:
    """Optional excitation band-pass: multiplies each spectrum row by
    exp(-(f - center_hz)^2 / (2 sigma_hz^2)). Off by default everywhere."""

    center_hz: float
    sigma_hz: float

    def factors(self, grid: FrequencyGrid) -> np.ndarray:
        f = grid.frequencies
        return np.exp(-((f - self.center_hz) ** 2) / (2.0 * self.sigma_hz**2))


def path_lengths_to(scene: PlateScene, point: tuple[float, float]) -> np.ndarray:
    """tx -> point -> rx Euclidean path length per pair, shape (n_pairs,)."""
    x, y = point
    dist = np.hypot(scene.sensors[:, 0] - x, scene.sensors[:, 1] - y)
    tx = np.fromiter((p[0] for p in scene.pairs), dtype=np.intp, count=scene.n_pairs)
    rx = np.fromiter((p[1] for p in scene.pairs), dtype=np.intp, count=scene.n_pairs)
    return dist[tx] + dist[rx]


def path_lengths(scene: PlateScene) -> np.ndarray:
    """Scatter path lengths for the scene's own damage point."""
    if scene.damage is None:
        raise GeometryError("scene has no damage point")
    return path_lengths_to(scene, scene.damage)


def scatter_path_length(scene: PlateScene, pair_index: int) -> float:
    """Distance travelled tx -> damage -> rx for one sensor pair."""
    if not 0 <= pair_index < scene.n_pairs:
        raise IndexError(f"pair index {pair_index} out of range")
    return float(path_lengths(scene)[pair_index])


def synthesize_spectrum(
    scene: PlateScene,
    grid: FrequencyGrid,
    model: DispersionModel,
    window: GaussianWindow | None = None,
) -> np.ndarray:
    """Far-field spectrum of the damage-scattered field, shape (n_bins, n_pairs).

    Every column sums the per-mode terms sqrt(1/(k r)) * exp(-1j k r) with
    k the alpha-scaled wavenumber and r the pair's scatter path. The DC row
    is forced to zero. The R_MIN guard against the amplitude pole is enforced
    by PlateScene itself, so every reachable scene is synthesizable.
    """
    paths = path_lengths(scene)
    kappas = wavenumber_table(model, grid.omegas)
    spectrum = kernels.spectrum_bank(paths[None, :], kappas)[0].T  # (Q, M)
    if window is not None:
        spectrum = spectrum * window.factors(grid)[:, None]
        spectrum[0, :] = 0.0
    return spectrum


def to_time_domain(spectrum: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """One-sided inverse transform, truncated to n_bins real samples.

    Per column: x[i] = (1/Q) * sum_q Re(X_q * exp(+1j * 2*pi * q * i / (2Q)))
    for i = 0..Q-1 with Q = grid.n_bins, i.e. samples at dt = 1/(2 f_max).
    Evaluated via a zero-padded inverse FFT, which computes the same sum.
    """
    spectrum = np.asarray(spectrum)
    if spectrum.shape[0] != grid.n_bins:
        raise ValueError(
            f"spectrum has {spectrum.shape[0]} rows, grid expects {grid.n_bins}"
        )
    nq = grid.n_bins
    return 2.0 * np.fft.ifft(spectrum, n=2 * nq, axis=0)[:nq].real
