"""Periodic spectral substrate: grid functions, multipliers, norms.

Conventions used across the package: a GridFunction samples a complex
function on the uniform grid x_j = j * period / n, j = 0..n-1.  Its
spectrum holds coefficients c_k with

    f(x) = sum_k c_k exp(i xi_k x),   xi_k = 2 pi k / period,

in FFT ordering, so the spectral array is exactly fft(samples) / n.
Norms are physical: discrete means carry the period factor, so values
match their continuum counterparts (norm of the constant 1 on a period-L
torus is sqrt(L) in L2).
"""

import numpy as np

from . import _kernels


class InputError(ValueError):
    """A caller violated a documented precondition."""


class AuditError(RuntimeError):
    """A runtime self-check failed; results past this point are untrusted."""


class AdmissibilityError(AuditError):
    """A cutoff pair failed its support-geometry spot check."""


class ConvergenceError(RuntimeError):
    """An iterative approximation did not reach its tolerance."""


class StepCountError(InputError):
    """A requested step count is too coarse for the advertised accuracy."""

    def __init__(self, message, suggested_steps):
        super().__init__(message)
        self.suggested_steps = suggested_steps


def _as_owned_complex(values):
    arr = np.array(values, dtype=np.complex128)
    if arr.ndim != 1:
        raise InputError("samples must be one-dimensional")
    n = arr.shape[0]
    if n < 4 or (n & (n - 1)) != 0:
        raise InputError(f"grid size must be a power of two >= 4, got {n}")
    arr.setflags(write=False)
    return arr


class GridFunction:
    """Complex periodic function known by its samples on a uniform grid.

    The sample array is frozen at construction; the spectrum is computed
    lazily and cached.  ``meta`` is a free-form dict for provenance notes
    (conservation drift, dropped drift rates, and similar audit output).
    """

    __slots__ = ("period", "samples", "_spectrum", "meta")

    def __init__(self, period, samples, meta=None):
        period = float(period)
        if not (np.isfinite(period) and period > 0):
            raise InputError(f"period must be positive and finite, got {period}")
        self.period = period
        self.samples = _as_owned_complex(samples)
        self._spectrum = None
        self.meta = dict(meta) if meta else {}

    @classmethod
    def from_spectrum(cls, period, spectrum, meta=None):
        spectrum = _as_owned_complex(spectrum)
        out = cls.__new__(cls)
        period = float(period)
        if not (np.isfinite(period) and period > 0):
            raise InputError(f"period must be positive and finite, got {period}")
        out.period = period
        samples = np.fft.ifft(spectrum) * spectrum.shape[0]
        samples.setflags(write=False)
        out.samples = samples
        out._spectrum = spectrum
        out.meta = dict(meta) if meta else {}
        return out

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dx(self):
        return self.period / self.n

    @property
    def x(self):
        return np.arange(self.n) * self.dx

    @property
    def freqs(self):
        """Angular frequencies xi_k in FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.period / self.n)

    @property
    def spectrum(self):
        if self._spectrum is None:
            spec = np.fft.fft(self.samples) / self.n
            spec.setflags(write=False)
            self._spectrum = spec
        return self._spectrum

    def with_samples(self, samples, meta=None):
        return GridFunction(self.period, samples, meta=meta)

    def derivative(self, order=1):
        if order < 0 or order != int(order):
            raise InputError("derivative order must be a nonnegative integer")
        order = int(order)
        if order == 0:
            return self
        mult = (1j * self.freqs) ** order
        if order % 2 == 1:
            # the unpaired Nyquist mode has no real odd derivative; drop it
            mult[self.n // 2] = 0.0
        return GridFunction.from_spectrum(self.period, mult * self.spectrum)

    def offgrid(self, points):
        """Evaluate the trigonometric interpolant at arbitrary points."""
        return evaluate_offgrid(self, points)

    def is_real(self, tol=1e-12):
        scale = max(1.0, float(np.max(np.abs(self.samples.real), initial=0.0)))
        return float(np.max(np.abs(self.samples.imag), initial=0.0)) <= tol * scale

    def real_part(self):
        return GridFunction(self.period, self.samples.real)

    def conj(self):
        return GridFunction(self.period, np.conj(self.samples))

    def _check_compatible(self, other):
        if self.period != other.period or self.n != other.n:
            raise InputError("grid functions live on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.period, self.samples + other.samples)
        return GridFunction(self.period, self.samples + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.period, self.samples - other.samples)
        return GridFunction(self.period, self.samples - other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.period, self.samples * other.samples)
        return GridFunction(self.period, self.samples * other)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.period, -self.samples)

    def __repr__(self):
        return f"GridFunction(period={self.period:.6g}, n={self.n})"


def _multiplier_values(multiplier, freqs):
    if isinstance(multiplier, np.ndarray):
        if multiplier.shape != freqs.shape:
            raise InputError("multiplier array does not match the frequency grid")
        return multiplier.astype(np.complex128)
    vals = multiplier(freqs)
    return np.asarray(vals, dtype=np.complex128)


def apply_multiplier(f, multiplier):
    """Apply a Fourier multiplier; raises if it is non-finite on a populated mode."""
    vals = _multiplier_values(multiplier, f.freqs)
    bad = ~np.isfinite(vals)
    if bad.any():
        mags = np.abs(f.spectrum)
        populated = mags > 1e-15 * np.max(mags)
        offending = bad & populated
        if offending.any():
            xi = f.freqs[offending][0]
            raise InputError(f"multiplier is non-finite at populated frequency xi={xi:.6g}")
        vals = np.where(bad, 0.0, vals)
    return GridFunction.from_spectrum(f.period, vals * f.spectrum)


def evaluate_offgrid(f, points):
    """Trigonometric interpolant of ``f`` at arbitrary points (complex array)."""
    pts = np.mod(np.asarray(points, dtype=np.float64), f.period)
    scalar = pts.ndim == 0
    theta = np.atleast_1d(pts) * (2.0 * np.pi / f.period)
    coeffs = np.fft.fftshift(f.spectrum)
    k0 = -(f.n // 2)
    # band-limited inputs (dyadic blocks especially) populate a narrow
    # window of modes; trimming to it keeps the sum linear in the band
    populated = np.nonzero(coeffs)[0]
    if populated.size == 0:
        out = np.zeros(theta.shape[0], dtype=np.complex128)
    else:
        i0, i1 = int(populated[0]), int(populated[-1]) + 1
        out = _kernels.offgrid_eval(theta, k0 + i0, np.ascontiguousarray(coeffs[i0:i1]))
    return out[0] if scalar else out


def lp_norm(f, p):
    """Physical Lebesgue norm; p may be any value in [1, inf]."""
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.samples)))
    p = float(p)
    if p < 1:
        raise InputError(f"Lebesgue exponent must be >= 1, got {p}")
    return float((f.period * np.mean(np.abs(f.samples) ** p)) ** (1.0 / p))


def sobolev_norm(f, s):
    """Norm sqrt(period * sum (1+xi^2)^s |c_k|^2)."""
    w = (1.0 + f.freqs**2) ** float(s)
    return float(np.sqrt(f.period * np.sum(w * np.abs(f.spectrum) ** 2)))


def zygmund_norm(f, s, system):
    """Hoelder-Zygmund norm of exponent ``s`` measured through ``system``."""
    return system.zygmund(f, s)


def norm(f, kind, **parameters):
    """Dispatch on kind in {"lp", "sobolev", "zygmund"}."""
    if kind == "lp":
        return lp_norm(f, parameters["p"])
    if kind == "sobolev":
        return sobolev_norm(f, parameters["s"])
    if kind == "zygmund":
        return zygmund_norm(f, parameters["s"], parameters["system"])
    raise InputError(f"unknown norm kind {kind!r}")


def inner(f, g):
    """L2 pairing integral of f * conj(g) over one period."""
    f._check_compatible(g)
    return complex(f.period * np.mean(f.samples * np.conj(g.samples)))


# ---------------------------------------------------------------------------
# Exactly saturating smoothstep.  B(u) = exp(-1/u) vanishes with all
# derivatives at 0, so s(u) = B(u) / (B(u) + B(1-u)) equals 0 for u <= 0 and
# 1 for u >= 1 in exact arithmetic, and the floating evaluation saturates
# exactly as well because exp underflows to zero.

def _bump_b(u):
    out = np.zeros_like(u)
    pos = u > 0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / u[pos])
    return out


def _bump_b1(u):
    out = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / up) / up**2
    return out


def _bump_b2(u):
    out = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / up) * (1.0 - 2.0 * up) / up**4
    return out


def smoothstep(u, order=0):
    """C-infinity ramp from 0 to 1 on [0, 1]; ``order`` selects a derivative."""
    u = np.asarray(u, dtype=np.float64)
    b, c = _bump_b(u), _bump_b(1.0 - u)
    denom = b + c
    interior = denom > 0
    safe = np.where(interior, denom, 1.0)
    if order == 0:
        out = np.where(u >= 1.0, 1.0, 0.0)
        return np.where(interior, b / safe, out)
    b1, c1 = _bump_b1(u), _bump_b1(1.0 - u)
    num1 = b1 * c + b * c1
    if order == 1:
        return np.where(interior, num1 / safe**2, 0.0)
    if order == 2:
        b2, c2 = _bump_b2(u), _bump_b2(1.0 - u)
        dnum = b2 * c - b * c2
        dden = b1 - c1
        return np.where(interior, (dnum * safe - 2.0 * num1 * dden) / safe**3, 0.0)
    raise InputError("smoothstep derivatives implemented up to order 2")


class FrequencyProfile:
    """Frequency factor of a separable symbol term.

    Wraps an evaluator xi -> value together with an optional homogeneity
    degree, a declared value at xi = 0, and a lazy analytic derivative.
    Homogeneity declarations are validated on a sample at construction.
    The zero value defaults to 0 for homogeneous profiles of nonnegative
    degree; a negative-degree profile evaluates to nan at 0 unless a zero
    value is supplied explicitly, and downstream multiplier application
    rejects nan on populated modes.
    """

    _UNSET = object()

    def __init__(self, fn, homogeneity=None, zero_value=_UNSET, deriv=None, label=""):
        self.fn = fn
        self.homogeneity = None if homogeneity is None else float(homogeneity)
        if zero_value is FrequencyProfile._UNSET:
            if self.homogeneity is not None and self.homogeneity >= 0:
                zero_value = 0.0 if self.homogeneity > 0 else None
            else:
                zero_value = None
        self.zero_value = zero_value
        self._deriv_thunk = deriv
        self._deriv_cache = None
        self.label = label
        if self.homogeneity is not None:
            self._validate_homogeneity()

    def _validate_homogeneity(self):
        xi = np.array([1.0, -1.0, 3.0, -3.0])
        base = np.asarray(self.fn(xi), dtype=np.complex128)
        for lam in (2.0, 4.0):
            scaled = np.asarray(self.fn(lam * xi), dtype=np.complex128)
            expect = lam**self.homogeneity * base
            scale = np.max(np.abs(expect)) + 1e-300
            if np.max(np.abs(scaled - expect)) > 1e-9 * scale:
                raise InputError(
                    f"profile {self.label or self.fn!r} is not homogeneous of "
                    f"degree {self.homogeneity}"
                )

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        scalar = xi.ndim == 0
        xi = np.atleast_1d(xi)
        out = np.empty(xi.shape, dtype=np.complex128)
        zero = xi == 0.0
        nz = ~zero
        if nz.any():
            out[nz] = np.asarray(self.fn(xi[nz]), dtype=np.complex128)
        if zero.any():
            if self.zero_value is not None:
                out[zero] = self.zero_value
            elif self.homogeneity is None:
                out[zero] = np.asarray(self.fn(np.array([0.0])), dtype=np.complex128)[0]
            else:
                out[zero] = np.nan
        return out[0] if scalar else out

    def derivative(self):
        if self._deriv_cache is None:
            if self._deriv_thunk is None:
                raise InputError(
                    f"profile {self.label or self.fn!r} has no analytic derivative"
                )
            self._deriv_cache = self._deriv_thunk()
        return self._deriv_cache

    def scaled(self, factor):
        factor = complex(factor)
        thunk = None
        if self._deriv_thunk is not None:
            thunk = lambda: self.derivative().scaled(factor)
        zv = FrequencyProfile._UNSET if self.zero_value is None else factor * self.zero_value
        return FrequencyProfile(
            lambda xi, _f=self.fn: factor * np.asarray(_f(xi), dtype=np.complex128),
            homogeneity=self.homogeneity,
            zero_value=zv,
            deriv=thunk,
            label=f"{factor!r}*{self.label}" if self.label else "",
        )

    def __mul__(self, other):
        if not isinstance(other, FrequencyProfile):
            return self.scaled(other)
        hom = None
        if self.homogeneity is not None and other.homogeneity is not None:
            hom = self.homogeneity + other.homogeneity
        zv = FrequencyProfile._UNSET
        if self.zero_value is not None and other.zero_value is not None:
            zv = self.zero_value * other.zero_value
        elif self.zero_value == 0.0 or other.zero_value == 0.0:
            zv = 0.0
        thunk = None
        if self._deriv_thunk is not None and other._deriv_thunk is not None:
            thunk = lambda: (self.derivative() * other) + (self * other.derivative())
        return FrequencyProfile(
            lambda xi: np.asarray(self(xi)) * np.asarray(other(xi)),
            homogeneity=hom,
            zero_value=zv,
            deriv=thunk,
            label=f"({self.label})*({other.label})" if self.label and other.label else "",
        )

    __rmul__ = scaled

    def __add__(self, other):
        if not isinstance(other, FrequencyProfile):
            raise InputError("can only add frequency profiles")
        hom = None
        if (
            self.homogeneity is not None
            and other.homogeneity is not None
            and self.homogeneity == other.homogeneity
        ):
            hom = self.homogeneity
        zv = FrequencyProfile._UNSET
        if self.zero_value is not None and other.zero_value is not None:
            zv = self.zero_value + other.zero_value
        thunk = None
        if self._deriv_thunk is not None and other._deriv_thunk is not None:
            thunk = lambda: self.derivative() + other.derivative()
        return FrequencyProfile(
            lambda xi: np.asarray(self(xi)) + np.asarray(other(xi)),
            homogeneity=hom,
            zero_value=zv,
            deriv=thunk,
        )

    # -- stock profiles ----------------------------------------------------

    @staticmethod
    def constant(value):
        value = complex(value)
        return FrequencyProfile(
            lambda xi: np.full(np.shape(xi), value, dtype=np.complex128),
            homogeneity=0.0,
            zero_value=value,
            deriv=lambda: FrequencyProfile.constant(0.0),
            label=f"{value!r}",
        )

    @staticmethod
    def one():
        return FrequencyProfile.constant(1.0)

    @staticmethod
    def power(degree):
        """|xi| ** degree with the full analytic derivative chain."""
        degree = float(degree)
        return FrequencyProfile(
            lambda xi: np.abs(xi) ** degree,
            homogeneity=degree,
            deriv=lambda: FrequencyProfile.signed_power(degree - 1.0).scaled(degree),
            label=f"|xi|^{degree:g}",
        )

    @staticmethod
    def signed_power(degree):
        """sign(xi) |xi| ** degree with the full analytic derivative chain."""
        degree = float(degree)
        return FrequencyProfile(
            lambda xi: np.sign(xi) * np.abs(xi) ** degree,
            homogeneity=degree,
            deriv=lambda: FrequencyProfile.power(degree - 1.0).scaled(degree),
            label=f"sgn(xi)|xi|^{degree:g}",
        )

    @staticmethod
    def identity():
        return FrequencyProfile(
            lambda xi: np.asarray(xi, dtype=np.complex128),
            homogeneity=1.0,
            deriv=lambda: FrequencyProfile.one(),
            label="xi",
        )

    @staticmethod
    def i_xi():
        return FrequencyProfile.identity().scaled(1j)
