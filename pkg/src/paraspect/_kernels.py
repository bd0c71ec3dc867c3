"""Hot numerical kernels with numba acceleration and pure-numpy fallbacks.

The backend is chosen once at import time: numba when importable, unless the
environment variable PARASPECT_NO_NUMBA is set to a non-empty value.  Both
implementations stay importable (``*_numba`` / ``*_numpy``) so the benchmark
can compare them on identical inputs.

Both kernels evaluate lattice Fourier sums.  ``offgrid_eval`` computes

    out_i = sum_j coeffs[j] * exp(i (k0 + j) theta_i)

for a contiguous index block, using a phase recurrence re-anchored every
_REANCHOR steps to keep rounding drift near 1e-13.  ``phase_synth`` computes
the oscillatory synthesis

    out_i = sum_k cwave[k] * exp(i (xi[k] x_i + Re sum_m T[k, m] E_m(x_i)))

with E_m(x) = exp(i mu[m] x), the mode-sum form of a position-dependent
real phase correction.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not os.environ.get("PARASPECT_NO_NUMBA")

_REANCHOR = 512


def offgrid_eval_numpy(theta, k0, coeffs):
    n_modes = coeffs.shape[0]
    out = np.zeros(theta.shape[0], dtype=np.complex128)
    chunk = max(1, (1 << 22) // max(n_modes, 1))
    karr = k0 + np.arange(n_modes)
    for start in range(0, theta.shape[0], chunk):
        block = theta[start : start + chunk]
        out[start : start + chunk] = np.exp(1j * np.outer(block, karr)) @ coeffs
    return out


if HAS_NUMBA:

    @njit(cache=True)
    def _offgrid_numba_impl(theta, k0, coeffs):
        n_pts = theta.shape[0]
        n_modes = coeffs.shape[0]
        out = np.empty(n_pts, dtype=np.complex128)
        for i in range(n_pts):
            th = theta[i]
            step = np.exp(1j * th)
            w = np.exp(1j * (k0 * th))
            acc = 0.0 + 0.0j
            for j in range(n_modes):
                if j % _REANCHOR == 0 and j > 0:
                    w = np.exp(1j * ((k0 + j) * th))
                acc += coeffs[j] * w
                w *= step
            out[i] = acc
        return out

    def offgrid_eval_numba(theta, k0, coeffs):
        return _offgrid_numba_impl(
            np.ascontiguousarray(theta, dtype=np.float64),
            float(k0),
            np.ascontiguousarray(coeffs, dtype=np.complex128),
        )

    @njit(cache=True)
    def _phase_synth_numba_impl(x, xi, cwave, mu, modes):
        n_pts = x.shape[0]
        n_waves = xi.shape[0]
        n_modes = mu.shape[0]
        out = np.empty(n_pts, dtype=np.complex128)
        env = np.empty(n_modes, dtype=np.complex128)
        for i in range(n_pts):
            pt = x[i]
            for m in range(n_modes):
                env[m] = np.exp(1j * (mu[m] * pt))
            acc = 0.0 + 0.0j
            for k in range(n_waves):
                phase = 0.0
                for m in range(n_modes):
                    phase += (modes[k, m] * env[m]).real
                acc += cwave[k] * np.exp(1j * (xi[k] * pt + phase))
            out[i] = acc
        return out

    def phase_synth_numba(x, xi, cwave, mu, modes):
        return _phase_synth_numba_impl(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(xi, dtype=np.float64),
            np.ascontiguousarray(cwave, dtype=np.complex128),
            np.ascontiguousarray(mu, dtype=np.float64),
            np.ascontiguousarray(modes, dtype=np.complex128),
        )


def phase_synth_numpy(x, xi, cwave, mu, modes):
    n_waves = xi.shape[0]
    out = np.zeros(x.shape[0], dtype=np.complex128)
    env = np.exp(1j * np.outer(mu, x))
    chunk = max(1, (1 << 21) // max(x.shape[0], 1))
    for start in range(0, n_waves, chunk):
        stop = min(start + chunk, n_waves)
        phase = (modes[start:stop] @ env).real
        phase += np.outer(xi[start:stop], x)
        out += cwave[start:stop] @ np.exp(1j * phase)
    return out


if USE_NUMBA:
    offgrid_eval = offgrid_eval_numba
    phase_synth = phase_synth_numba
else:
    offgrid_eval = offgrid_eval_numpy
    phase_synth = phase_synth_numpy
