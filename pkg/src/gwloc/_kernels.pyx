# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: far-field spectrum synthesis and heatmap scoring.

``gwloc.kernels`` dispatches here when this extension is importable; the
numpy implementations over there are the reference behaviour and must agree
with these within floating-point round-off.
"""
import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport cos, fabs, sin, sqrt

cnp.import_array()

ctypedef fused bank_t:
    float
    double


def spectrum_bank(double[:, ::1] paths, double[:, ::1] kappas):
    """Far-field spectra for a batch of scatter paths.

    paths: (B, M) tx->damage->rx path lengths in metres.
    kappas: (n_modes, Q) effective wavenumbers per mode and frequency bin;
      column 0 is the DC bin and the output is forced to zero there.

    Returns complex128 (B, M, Q) with
      out[b, m, q] = sum_n sqrt(1/(kappas[n, q] * paths[b, m]))
                     * exp(-1j * kappas[n, q] * paths[b, m]).
    """
    cdef Py_ssize_t nb = paths.shape[0]
    cdef Py_ssize_t nm = paths.shape[1]
    cdef Py_ssize_t nmode = kappas.shape[0]
    cdef Py_ssize_t nq = kappas.shape[1]
    # (re, im) pairs; viewed as complex128 on the way out
    out = np.zeros((nb, nm, nq, 2), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out
    cdef Py_ssize_t b, m, n, q
    cdef double kr, amp, r
    for b in prange(nb, nogil=True, schedule="static"):
        for m in range(nm):
            r = paths[b, m]
            for n in range(nmode):
                for q in range(1, nq):
                    kr = kappas[n, q] * r
                    amp = 1.0 / sqrt(kr)
                    o[b, m, q, 0] = o[b, m, q, 0] + amp * cos(kr)
                    o[b, m, q, 1] = o[b, m, q, 1] - amp * sin(kr)
    return out.view(np.complex128)[:, :, :, 0]


def pair_correlation_scores(bank_t[:, :, ::1] bank, double[:, ::1] observed):
    """Sum over pairs of absolute inner products against a candidate bank.

    bank: (B, M, Q) column-normalized model records; observed: (M, Q)
    column-normalized observation. Accumulates in float64 for both bank
    dtypes. Returns float64 (B,).
    """
    cdef Py_ssize_t nb = bank.shape[0]
    cdef Py_ssize_t nm = bank.shape[1]
    cdef Py_ssize_t nq = bank.shape[2]
    scores = np.zeros(nb, dtype=np.float64)
    cdef double[::1] s = scores
    cdef Py_ssize_t b, m, q
    cdef double acc, tot
    for b in prange(nb, nogil=True, schedule="static"):
        tot = 0.0
        for m in range(nm):
            acc = 0.0
            for q in range(nq):
                acc = acc + bank[b, m, q] * observed[m, q]
            tot = tot + fabs(acc)
        s[b] = tot
    return scores
