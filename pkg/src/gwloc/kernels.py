"""Numeric hot kernels with a compiled fast path.

The Cython extension ``gwloc._kernels`` implements the same two functions;
the numpy versions here are the reference implementation and the fallback
when the extension is unavailable. Set ``GWLOC_PURE_PYTHON=1`` to force the
fallback (used by the benchmark and the parity tests).
"""

import os

import numpy as np

try:
    from gwloc import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _use_compiled() -> bool:
    return _compiled is not None and os.environ.get("GWLOC_PURE_PYTHON") != "1"


def active_backend() -> str:
    """Name of the backend the dispatchers will pick right now."""
    return "compiled" if _use_compiled() else "numpy"


def _spectrum_bank_numpy(paths: np.ndarray, kappas: np.ndarray) -> np.ndarray:
    nb, nm = paths.shape
    nmode, nq = kappas.shape
    out = np.zeros((nb, nm, nq), dtype=np.complex128)
    for n in range(nmode):
        kr = paths[:, :, None] * kappas[n, 1:][None, None, :]
        amp = 1.0 / np.sqrt(kr)
        out[:, :, 1:] += amp * np.exp(-1j * kr)
    return out


def _pair_correlation_scores_numpy(bank: np.ndarray, observed: np.ndarray) -> np.ndarray:
    inner = np.einsum("bmq,mq->bm", bank, observed.astype(bank.dtype, copy=False))
    return np.abs(inner).sum(axis=1, dtype=np.float64)


def spectrum_bank(paths: np.ndarray, kappas: np.ndarray) -> np.ndarray:
    """Batched far-field spectra.

    paths: (B, M) scatter path lengths [m], all > 0.
    kappas: (n_modes, Q) effective wavenumbers [rad/m]; column 0 is DC and
      the corresponding output column is zero.

    Returns complex128 (B, M, Q):
      out[b, m, q] = sum_n sqrt(1/(kappa[n,q] r[b,m])) * exp(-1j kappa[n,q] r[b,m])
    """
    paths = np.ascontiguousarray(paths, dtype=np.float64)
    kappas = np.ascontiguousarray(kappas, dtype=np.float64)
    if _use_compiled():
        return _compiled.spectrum_bank(paths, kappas)
    return _spectrum_bank_numpy(paths, kappas)


def pair_correlation_scores(bank: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Per-cell sum over pairs of |<bank column, observed column>|.

    bank: (B, M, Q) float32 or float64, columns already normalized.
    observed: (M, Q) float64, columns already normalized.
    Returns float64 (B,).
    """
    observed = np.ascontiguousarray(observed, dtype=np.float64)
    if _use_compiled():
        return _compiled.pair_correlation_scores(np.ascontiguousarray(bank), observed)
    return _pair_correlation_scores_numpy(bank, observed)
