"""Model-correlation damage localization (the physical baseline).

Scores every cell of a candidate grid by how well the forward model,
evaluated with damage at that cell, correlates with the observed record:
per sensor pair, the absolute normalized inner product of the time-domain
columns, summed over pairs. The argmax cell center is the location estimate.

Candidate records for a (layout, grid, model, resolution) combination are
precomputed into a normalized bank and cached, so sweeping many test samples
against the same sensor layout costs one synthesis pass.
"""

import json
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from gwloc import kernels
from gwloc.dispersion import DispersionModel, wavenumber_table
from gwloc.wavefield import (
    R_MIN,
    FrequencyGrid,
    PlateScene,
    path_lengths_to,
    synthesize_spectrum,
    to_time_domain,
)

_BANK_CACHE_SIZE = 4
_BANK_CHUNK_CELLS = 256


@dataclass
class Heatmap:
    """Correlation scores over the candidate grid.

    ``scores`` has shape (ny, nx): one row per y-line, columns follow x.
    Skipped cells (centers within R_MIN of a sensor) hold -inf. ``argmax``
    is the center of the best cell, first occurrence winning row-major ties.
    """

    scores: np.ndarray
    x_centers: np.ndarray
    y_centers: np.ndarray
    argmax: tuple[float, float]

    @property
    def nx(self) -> int:
        return self.scores.shape[1]

    @property
    def ny(self) -> int:
        return self.scores.shape[0]


def cell_centers(length: float, width: float, nx: int, ny: int):
    """Centers of an nx-by-ny grid of cells covering the plate."""
    xs = (np.arange(nx) + 0.5) * (length / nx)
    ys = (np.arange(ny) + 0.5) * (width / ny)
    return xs, ys


def _normalize_columns(record: np.ndarray) -> np.ndarray:
    """Scale each pair column to unit norm; all-zero columns stay zero."""
    norms = np.sqrt(np.sum(record**2, axis=0))
    out = record / np.where(norms == 0.0, 1.0, norms)
    return out


def correlation_score(
    observed: np.ndarray,
    candidate: tuple[float, float],
    scene: PlateScene,
    grid: FrequencyGrid,
    model: DispersionModel,
) -> float:
    """Score one candidate location against an observed record.

    Sum over pairs of |<observed column, model column>| / (norms product),
    with the model record synthesized for damage at ``candidate``. Zero-norm
    columns contribute 0. A candidate within R_MIN of a sensor returns -inf
    (skip-cell) so it can never win an argmax; a candidate outside the plate
    is a caller error.
    """
    x, y = float(candidate[0]), float(candidate[1])
    if not (0 <= x <= scene.length and 0 <= y <= scene.width):
        raise ValueError(f"candidate ({x}, {y}) outside the plate")
    dist = np.hypot(scene.sensors[:, 0] - x, scene.sensors[:, 1] - y)
    if np.min(dist) < R_MIN:
        return -math.inf
    model_time = to_time_domain(
        synthesize_spectrum(scene.with_damage((x, y)), grid, model), grid
    )
    obs = np.asarray(observed, dtype=np.float64)
    if obs.shape != model_time.shape:
        raise ValueError(f"observed shape {obs.shape} != model shape {model_time.shape}")
    inner = np.abs(np.sum(obs * model_time, axis=0))
    denom = np.sqrt(np.sum(obs**2, axis=0)) * np.sqrt(np.sum(model_time**2, axis=0))
    good = denom > 0.0
    return float(np.sum(inner[good] / denom[good]))


class CandidateBank:
    """Normalized model records for every cell of a candidate grid."""

    def __init__(self, scene, grid, model, nx, ny, records, valid, xs, ys):
        self.scene = scene
        self.grid = grid
        self.model = model
        self.nx = nx
        self.ny = ny
        self.records = records  # (nx*ny, n_pairs, n_bins), column-normalized
        self.valid = valid  # (nx*ny,) bool
        self.x_centers = xs
        self.y_centers = ys

    @classmethod
    def build(
        cls,
        scene: PlateScene,
        grid: FrequencyGrid,
        model: DispersionModel,
        nx: int,
        ny: int,
        dtype=np.float32,
    ) -> "CandidateBank":
        """Synthesize, transform, and normalize all candidate records.

        Cells whose centers sit within R_MIN of a sensor are marked invalid
        and skipped. float32 storage keeps a 50x50 desk-scale bank in the
        hundred-megabyte range; scoring still accumulates in float64.
        """
        if nx < 2 or ny < 2:
            raise ValueError("grid resolution must be at least 2x2")
        xs, ys = cell_centers(scene.length, scene.width, nx, ny)
        gx, gy = np.meshgrid(xs, ys)  # (ny, nx), row-major over y then x
        centers = np.column_stack([gx.ravel(), gy.ravel()])  # (B, 2)
        n_cells = centers.shape[0]

        dist = np.hypot(
            centers[:, 0:1] - scene.sensors[None, :, 0],
            centers[:, 1:2] - scene.sensors[None, :, 1],
        )  # (B, m)
        valid = np.min(dist, axis=1) >= R_MIN

        tx = np.fromiter((p[0] for p in scene.pairs), dtype=np.intp)
        rx = np.fromiter((p[1] for p in scene.pairs), dtype=np.intp)
        paths = dist[:, tx] + dist[:, rx]  # (B, M)
        paths[~valid] = 1.0  # dummy, keeps synthesis finite; scored as -inf anyway

        kappas = wavenumber_table(model, grid.omegas)
        n_bins = grid.n_bins
        records = np.empty((n_cells, scene.n_pairs, n_bins), dtype=dtype)
        for start in range(0, n_cells, _BANK_CHUNK_CELLS):
            stop = min(start + _BANK_CHUNK_CELLS, n_cells)
            spectra = kernels.spectrum_bank(paths[start:stop], kappas)
            # same one-sided inverse as wavefield.to_time_domain, last axis
            time = 2.0 * np.fft.ifft(spectra, n=2 * n_bins, axis=-1)[..., :n_bins].real
            norms = np.sqrt(np.sum(time**2, axis=-1, keepdims=True))
            np.divide(time, norms, out=time, where=norms > 0.0)
            records[start:stop] = time
        return cls(scene, grid, model, nx, ny, records, valid, xs, ys)

    def scores(self, observed: np.ndarray) -> np.ndarray:
        """Correlation score of every cell against one observed record."""
        obs = np.asarray(observed, dtype=np.float64)
        expected = (self.grid.n_bins, self.scene.n_pairs)
        if obs.shape != expected:
            raise ValueError(f"observed shape {obs.shape}, expected {expected}")
        obs_n = np.ascontiguousarray(_normalize_columns(obs).T)  # (M, Q)
        out = kernels.pair_correlation_scores(self.records, obs_n)
        out[~self.valid] = -math.inf
        return out


_bank_cache: OrderedDict = OrderedDict()


def _bank_key(scene, grid, model, nx, ny):
    modes = tuple(
        (m.kind, m.c if m.kind == "linear" else m.d) for m in model.modes
    )
    return (
        scene.sensors.tobytes(),
        scene.pairs,
        scene.length,
        scene.width,
        grid.n_bins,
        grid.f_max,
        modes,
        model.alpha,
        nx,
        ny,
    )


def candidate_bank(scene, grid, model, nx, ny) -> CandidateBank:
    """Cached CandidateBank for a sensor layout + grid + model + resolution."""
    key = _bank_key(scene, grid, model, nx, ny)
    bank = _bank_cache.get(key)
    if bank is None:
        bank = CandidateBank.build(scene, grid, model, nx, ny)
        _bank_cache[key] = bank
        while len(_bank_cache) > _BANK_CACHE_SIZE:
            _bank_cache.popitem(last=False)
    return bank


def localize_grid(
    observed: np.ndarray,
    scene: PlateScene,
    grid: FrequencyGrid,
    model: DispersionModel,
    nx: int,
    ny: int,
    bank: CandidateBank | None = None,
) -> Heatmap:
    """Evaluate the correlation score at every cell center and take the argmax."""
    if bank is None:
        bank = candidate_bank(scene, grid, model, nx, ny)
    flat = bank.scores(observed)
    scores = flat.reshape(ny, nx)
    best = int(np.argmax(scores))  # first occurrence on row-major ties
    j, i = divmod(best, nx)
    return Heatmap(
        scores=scores,
        x_centers=bank.x_centers,
        y_centers=bank.y_centers,
        argmax=(float(bank.x_centers[i]), float(bank.y_centers[j])),
    )


def save_heatmap(
    heatmap: Heatmap,
    csv_path,
    json_path,
    true_damage: tuple[float, float] | None = None,
    extra: dict | None = None,
) -> None:
    """CSV of scores (one row per y-line) plus a JSON sidecar with geometry."""
    with open(csv_path, "w", encoding="utf-8") as fh:
        for row in heatmap.scores:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
    sidecar = {
        "nx": heatmap.nx,
        "ny": heatmap.ny,
        "x_centers": heatmap.x_centers.tolist(),
        "y_centers": heatmap.y_centers.tolist(),
        "argmax": list(heatmap.argmax),
        "true_damage": None if true_damage is None else list(true_damage),
    }
    if extra:
        sidecar.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
