"""Timing comparison of the numba kernels against the numpy fallbacks.

Runs both backends on identical inputs, checks they agree, and prints a
table of best-of-five wall times.  Usage: python benchmarks/bench_kernels.py
[--points N] [--repeats R].
"""

import argparse
import time

import numpy as np

from paraspect import _kernels


def best_time(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def offgrid_case(rng, n_points, n_modes):
    theta = rng.uniform(0.0, 2.0 * np.pi, n_points)
    coeffs = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    k0 = -(n_modes // 2)
    return (theta, float(k0), coeffs)

def phase_case(rng, n_points, n_waves, n_modes=9):
    x = rng.uniform(0.0, 8.0 * np.pi, n_points)
    xi = np.sort(rng.uniform(0.5, 2.0, n_waves)) * 32.0
    cwave = rng.standard_normal(n_waves) + 1j * rng.standard_normal(n_waves)
    mu = np.arange(1, n_modes + 1, dtype=np.float64) * 0.25
    modes = 0.1 * (
        rng.standard_normal((n_waves, n_modes))
        + 1j * rng.standard_normal((n_waves, n_modes))
    )
    return (x, xi, cwave, mu, modes)


def run(n_points, repeats):
    rng = np.random.default_rng(3)
    cases = []
    for n_modes in (64, 512, 4096):
        cases.append(
            (
                f"offgrid_eval  {n_points} pts x {n_modes} modes",
                _kernels.offgrid_eval_numpy,
                getattr(_kernels, "offgrid_eval_numba", None),
                offgrid_case(rng, n_points, n_modes),
            )
        )
    for n_waves in (128, 1024):
        cases.append(
            (
                f"phase_synth   {n_points} pts x {n_waves} waves",
                _kernels.phase_synth_numpy,
                getattr(_kernels, "phase_synth_numba", None),
                phase_case(rng, n_points, n_waves),
            )
        )

    print(f"backend in use: {'numba' if _kernels.USE_NUMBA else 'numpy'}")
    header = f"{'case':<42} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max diff':>10}"
    print(header)
    print("-" * len(header))
    for label, fn_np, fn_nb, args in cases:
        t_np = best_time(fn_np, args, repeats)
        if fn_nb is None:
            print(f"{label:<42} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8} {'-':>10}")
            continue
        fn_nb(*args)  # compile outside the timed region
        t_nb = best_time(fn_nb, args, repeats)
        diff = float(np.max(np.abs(fn_np(*args) - fn_nb(*args))))
        print(
            f"{label:<42} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
            f"{t_np / t_nb:>7.1f}x {diff:>10.2e}"
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=2048)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if not _kernels.HAS_NUMBA:
        print("numba is not importable; timing the numpy fallbacks only")
    run(args.points, args.repeats)


if __name__ == "__main__":
    main()
