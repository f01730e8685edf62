#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the two hot paths of the grid-search localizer at desk scale: batched
spectrum synthesis (the candidate-bank build) and per-cell correlation
scoring. Run after `pip install -e . --no-build-isolation`:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from gwloc import kernels
from gwloc.dispersion import default_model, wavenumber_table
from gwloc.wavefield import FrequencyGrid

N_CELLS = 512
N_PAIRS = 56
N_BINS = 250
REPEATS = 3


def _time(fn, *args):
    best = float("inf")
    for _ in range(REPEATS):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    rng = np.random.default_rng(0)
    grid = FrequencyGrid(n_bins=N_BINS, f_max=1.0e6)
    kappas = wavenumber_table(default_model(), grid.omegas)
    paths = rng.uniform(0.1, 2.5, size=(N_CELLS, N_PAIRS))

    bank = rng.normal(size=(N_CELLS, N_PAIRS, N_BINS)).astype(np.float32)
    observed = rng.normal(size=(N_PAIRS, N_BINS))

    print(f"cells={N_CELLS} pairs={N_PAIRS} bins={N_BINS} (best of {REPEATS})")
    have_compiled = kernels._compiled is not None
    if not have_compiled:
        print("compiled extension not built; showing numpy fallback only")

    t_np, ref = _time(kernels._spectrum_bank_numpy, paths, kappas)
    print(f"spectrum_bank            numpy    {t_np * 1e3:8.1f} ms")
    if have_compiled:
        t_cy, out = _time(kernels._compiled.spectrum_bank, paths, kappas)
        err = np.max(np.abs(out - ref)) / np.max(np.abs(ref))
        print(
            f"spectrum_bank            compiled {t_cy * 1e3:8.1f} ms"
            f"   speedup x{t_np / t_cy:.2f}  max rel diff {err:.2e}"
        )

    t_np, ref = _time(kernels._pair_correlation_scores_numpy, bank, observed)
    print(f"pair_correlation_scores  numpy    {t_np * 1e3:8.1f} ms")
    if have_compiled:
        t_cy, out = _time(
            kernels._compiled.pair_correlation_scores,
            bank,
            np.ascontiguousarray(observed),
        )
        err = np.max(np.abs(out - ref)) / np.max(np.abs(ref))
        print(
            f"pair_correlation_scores  compiled {t_cy * 1e3:8.1f} ms"
            f"   speedup x{t_np / t_cy:.2f}  max rel diff {err:.2e}"
        )


if __name__ == "__main__":
    main()
