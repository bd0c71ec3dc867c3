"""Paracomposition under a circle diffeomorphism.

A degree-one map kappa between circles of periods L1 and L2 splits as
kappa(x) = c x + P(x) with c = L2 / L1 and P periodic.  The global
paracomposition recombines dyadic pieces of a target-side function after
composition,

    kappa*_g u = sum_p [u_p o kappa]_p,

where [.]_p regroups source-side blocks in a window around p.  The module
selects the source partition size from the measured operator constants,
audits the non-stationarity bound that selection is meant to guarantee,
and measures the smoothing order of the remainder operators: the
linearization defect, the recoupe defects, and the symbol-conjugation
defect against the pushed-forward symbol.

Conventions: the target side always carries the size-0 partition, the
source side the selected size n0.  All compositions evaluate trigonometric
interpolants off-grid; no interpolation error enters the measurements.
"""

import math

import numpy as np

from .core import (
    AuditError,
    ConvergenceError,
    GridFunction,
    InputError,
    evaluate_offgrid,
    lp_norm,
    sobolev_norm,
)
from .dyadic import DyadicSystem, build_cutoff
from .paradiff import (
    AdmissibleCutoffPair,
    SeparableSymbol,
    _is_zero_profile,
    apply_T,
    apply_Tdot,
    function_symbol,
    unit_wave,
)
from .reports import make_decay_report

DEFAULT_EPS0 = 0.1
RECOUPE_MARGIN = 8
ROUNDTRIP_PROBES = 64
ROUNDTRIP_TOL = 1e-10


# ---------------------------------------------------------------------------
# Diffeomorphism.


class Diffeomorphism:
    """Orientation-preserving degree-one circle map with a declared C^rho derivative.

    ``perturbation`` is the periodic part P on the source grid; the linear
    ramp c x is implicit.  ``rho`` declares the Hoelder regularity of the
    derivative and drives every smoothing-order claim downstream.  ``n0``
    and ``p0`` are populated by :func:`select_partition_size`.
    """

    def __init__(self, period_in, period_out, perturbation, rho, m0=None, n0=None, p0=None):
        self.period_in = float(period_in)
        self.period_out = float(period_out)
        if self.period_in <= 0 or self.period_out <= 0:
            raise InputError("periods must be positive")
        self.c = self.period_out / self.period_in
        if abs(perturbation.period - self.period_in) > 1e-12 * self.period_in:
            raise InputError("perturbation must be periodic with the source period")
        if not perturbation.is_real():
            raise InputError("perturbation must be real-valued")
        self.perturbation = perturbation.real_part()
        self.rho = float(rho)
        if self.rho <= 0:
            raise InputError("derivative regularity rho must be positive")
        self._dP = self.perturbation.derivative()
        self.derivative = GridFunction(
            self.period_in, self.c + self._dP.samples.real
        )
        measured = float(np.min(self.derivative.samples.real))
        if measured <= 0:
            raise InputError("map is not increasing: derivative changes sign on the grid")
        if m0 is None:
            m0 = measured
        elif m0 > measured + 1e-12:
            raise InputError(
                f"declared lower bound m0={m0:.6g} exceeds the measured minimum {measured:.6g}"
            )
        self.m0 = float(m0)
        # the grid max can undershoot the interpolant sup between nodes,
        # which would leave the inverse root outside its bisection bracket;
        # oversample 4x and inflate to get a certified bound
        spec = self.perturbation.spectrum
        k1 = (spec.size + 1) // 2
        fine = np.zeros(4 * spec.size, dtype=np.complex128)
        fine[:k1] = spec[:k1]
        fine[k1 - spec.size:] = spec[k1:]
        dense = np.fft.ifft(fine) * fine.size
        self._pert_linf = 1.02 * float(np.max(np.abs(dense.real)))
        self.n0 = None if n0 is None else int(n0)
        self.p0 = None if p0 is None else int(p0)
        self.audit_info = {}
        self._check_roundtrip()

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.c * x + evaluate_offgrid(self.perturbation, x).real

    def derivative_at(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.c + evaluate_offgrid(self._dP, x).real

    def inverse(self, y):
        """Solve kappa(x) = y by damped Newton with a bisection bracket."""
        arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        pad = (self._pert_linf + 1e-9) / self.c + 1e-9
        lo = arr / self.c - pad
        hi = arr / self.c + pad
        x = arr / self.c
        tol = 1e-13 * max(1.0, self.period_in)
        for _ in range(100):
            f = self.forward(x) - arr
            if np.max(np.abs(f)) <= tol:
                break
            below = f < 0.0
            lo = np.where(below, np.maximum(lo, x), lo)
            hi = np.where(below, hi, np.minimum(hi, x))
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = x - f / self.derivative_at(x)
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            x = np.where(bad, 0.5 * (lo + hi), cand)
        else:
            raise ConvergenceError("inverse map iteration did not reach tolerance")
        return x if np.ndim(y) else float(x[0])

    def _check_roundtrip(self):
        probes = np.linspace(0.0, self.period_in, ROUNDTRIP_PROBES, endpoint=False)
        back = self.inverse(self.forward(probes))
        if np.max(np.abs(back - probes)) > ROUNDTRIP_TOL * max(1.0, self.period_in):
            raise InputError("inverse round trip failed; map may not be injective")
        # degree one: kappa(x + L1) = kappa(x) + L2 holds by construction,
        # spot-check it anyway against evaluator drift
        if abs(self.forward(self.period_in) - self.forward(0.0) - self.period_out) > 1e-10 * max(
            1.0, self.period_out
        ):
            raise InputError("map does not advance by one target period per source period")

    def to_dict(self):
        spec = self.perturbation.spectrum
        return {
            "L1": self.period_in,
            "L2": self.period_out,
            "c": self.c,
            "perturbation_spectrum": {
                "re": spec.real.tolist(),
                "im": spec.imag.tolist(),
            },
            "m0": self.m0,
            "rho": self.rho,
            "n0": self.n0,
            "p0": self.p0,
        }

    @classmethod
    def from_dict(cls, data):
        spec = np.asarray(data["perturbation_spectrum"]["re"], dtype=np.float64) + 1j * np.asarray(
            data["perturbation_spectrum"]["im"], dtype=np.float64
        )
        pert = GridFunction.from_spectrum(float(data["L1"]), spec)
        return cls(
            data["L1"],
            data["L2"],
            pert,
            data["rho"],
            m0=data.get("m0"),
            n0=data.get("n0"),
            p0=data.get("p0"),
        )

    def __repr__(self):
        return (
            f"Diffeomorphism(L1={self.period_in:.6g}, L2={self.period_out:.6g}, "
            f"m0={self.m0:.4g}, rho={self.rho:.3g}, n0={self.n0}, p0={self.p0})"
        )


def identity_map(period, n_points, rho=1.5):
    zero = GridFunction(period, np.zeros(int(n_points)))
    return Diffeomorphism(period, period, zero, rho)


def dilation_map(period_in, factor, n_points, rho=1.5):
    if factor <= 0:
        raise InputError("dilation factor must be positive")
    zero = GridFunction(period_in, np.zeros(int(n_points)))
    return Diffeomorphism(period_in, factor * period_in, zero, rho)


def prescribed_regularity_map(period, n_points, rho, amplitude=0.3, seed=0):
    """Map whose derivative sits exactly at regularity ``rho``.

    The derivative is 1 + amplitude * W with W one unit of a random-phase
    lacunary sum: mode k carries amplitude |k|^(-rho - 1/2), which makes
    every dyadic block of W contribute the same Zygmund C^rho mass.  A
    smoother perturbation would decay faster than the claimed orders and
    make the slope fits vacuous.
    """
    n_points = int(n_points)
    if amplitude <= 0 or amplitude >= 1:
        raise InputError("amplitude must sit in (0, 1) to keep the map increasing")
    rng = np.random.default_rng(seed)
    k_top = n_points // 4
    spec = np.zeros(n_points, dtype=np.complex128)
    for k in range(1, k_top):
        phase = np.exp(2j * np.pi * rng.uniform())
        spec[k] = 0.5 * k ** (-(rho + 0.5)) * phase
        spec[-k] = np.conj(spec[k])
    w = GridFunction.from_spectrum(float(period), spec)
    sup = float(np.max(np.abs(w.samples.real)))
    dp_samples = amplitude * w.samples.real / sup
    dp = GridFunction(float(period), dp_samples)
    # spectral antiderivative of the (mean-free) derivative perturbation
    pspec = np.zeros(n_points, dtype=np.complex128)
    nz = dp.freqs != 0.0
    pspec[nz] = dp.spectrum[nz] / (1j * dp.freqs[nz])
    pert = GridFunction.from_spectrum(float(period), pspec).real_part()
    return Diffeomorphism(period, period, pert, rho)


# ---------------------------------------------------------------------------
# Partition-size selection and the non-stationarity audit.


def _measurement_system(kappa, n_points=None):
    pts = kappa.perturbation.n if n_points is None else int(n_points)
    return DyadicSystem(build_cutoff(1), kappa.period_in, pts)


def select_partition_size(kappa, eps0=DEFAULT_EPS0, n_points=None):
    """Pick the source partition size and remainder threshold for ``kappa``.

    n0 = [log2(M1 ||k'||_inf + 1)] + [1 + ln K] + 1 with K = 2 / m0 in one
    dimension and M1 the measured sup-norm constant of the smoothing
    operators on the derivative; p0 grows like (1/eps0) log of the measured
    lowpass approximation constant M2.  Both constants are measured on a
    size-1 system, never assumed.  The non-stationarity bound the selection
    is designed to guarantee is then audited on a sampled lattice; a
    violation raises with the offending tuple.

    Returns (n0, p0) and records them on ``kappa`` together with the
    measured constants in ``kappa.audit_info``.
    """
    eps0 = float(eps0)
    if not 0.0 < eps0 <= 0.5:
        raise InputError("eps0 must sit in (0, 1/2]")
    meas = _measurement_system(kappa, n_points)
    kprime = GridFunction(
        kappa.period_in,
        kappa.derivative_at(np.arange(meas.n_points) * (meas.period / meas.n_points)),
    )
    sup_kprime = lp_norm(kprime, np.inf)

    m1 = 1.0
    m2 = 0.0
    holder = meas.zygmund(kprime, eps0)
    for p in range(meas.p_max + 1):
        smooth = meas.lowpass(kprime, p)
        m1 = max(m1, lp_norm(smooth, np.inf) / sup_kprime)
        if holder > 0 and p < meas.p_max:
            gap = lp_norm(kprime - smooth, np.inf)
            m2 = max(m2, gap * 2.0 ** (p * eps0) / holder)

    big_k = 2.0 / kappa.m0
    n0 = int(math.floor(math.log2(m1 * sup_kprime + 1.0))) + int(
        math.floor(1.0 + math.log(big_k))
    ) + 1
    arg = 2.0 * m2 * holder / kappa.m0
    p0 = 0 if arg <= 1.0 else int(math.floor(math.log(arg) / eps0)) + 1

    kappa.n0 = n0
    kappa.p0 = p0
    kappa.audit_info = {
        "M1": m1,
        "M2": m2,
        "K": big_k,
        "eps0": eps0,
        "holder_norm": holder,
        "sup_derivative": sup_kprime,
    }
    _audit_nonstationarity(kappa, meas, kprime)
    return n0, p0


def _audit_nonstationarity(kappa, meas, kprime):
    """Spot-check |S_p k'(y) eta - xi| >= 1 on the two covered regimes.

    Regime one pairs source cells at j >= q + N0 + 1 with any smoothing
    level; regime two takes p at or beyond the threshold and j <= q - N0 - 1,
    where the selection guarantees S_p k' >= m0/2.  Cells are the exact
    supports of the size-n0 (xi) and size-1 (eta) partitions.
    """
    n0 = kappa.n0
    big_n0 = 2 * (n0 + 1)
    cell_src = build_cutoff(n0) if n0 != meas.size_n else meas.cutoff
    plat_src, supp_src = cell_src.plateau_edge, cell_src.support_edge
    plat_eta, supp_eta = meas.cutoff.plateau_edge, meas.cutoff.support_edge

    y = np.arange(meas.n_points) * (meas.period / meas.n_points)
    y = y[:: max(1, meas.n_points // 48)]
    smoothed = {}

    def s_vals(p):
        p_eff = min(p, meas.p_max)
        if p_eff not in smoothed:
            smoothed[p_eff] = evaluate_offgrid(meas.lowpass(kprime, p_eff), y).real
        return smoothed[p_eff]

    def check(p, j, q, eta, xi):
        vals = np.abs(s_vals(p) * eta - xi)
        worst = int(np.argmin(vals))
        if vals[worst] < 1.0:
            raise AuditError(
                "non-stationarity audit failed at "
                f"(p={p}, j={j}, q={q}, y={y[worst]:.5f}, eta={eta:.5f}, "
                f"xi={xi:.5f}): |S_p k' eta - xi| = {vals[worst]:.5f}"
            )

    def eta_samples(q):
        lo = 0.0 if q == 0 else 2.0 ** (q - 1) * plat_eta
        hi = 2.0**q * supp_eta
        return np.linspace(max(lo, 1e-9), hi, 5)

    p0 = kappa.p0
    for q in (0, 2, 5):
        for j in (q + big_n0 + 1, q + big_n0 + 2, q + big_n0 + 4):
            xi_lo, xi_hi = 2.0 ** (j - 1) * plat_src, 2.0**j * supp_src
            for p in (0, 1, max(2, p0)):
                for eta in eta_samples(q):
                    for xi in np.linspace(xi_lo, xi_hi, 5):
                        check(p, j, q, eta, xi)

    # regime two needs q large enough that the analytic lower bound clears 1
    q = big_n0 + 1
    while (kappa.m0 / 2.0) * 2.0 ** (q - 1) * plat_eta - 2.0 ** (q - n0 - 2) < 1.0:
        q += 1
        if q > big_n0 + 40:
            raise AuditError("no admissible frequency range for the second audit regime")
    for qq in (q, q + 2):
        for j in sorted({0, (qq - big_n0 - 1) // 2, qq - big_n0 - 1}):
            for p in sorted({p0, p0 + 2, meas.p_max}):
                for eta in eta_samples(qq):
                    for xi in np.linspace(0.0, 2.0 ** (j + n0 + 1), 5):
                        check(p, j, qq, eta, xi)


# ---------------------------------------------------------------------------
# Recoupe and the global paracomposition.


class Recoupe:
    """Window sum of source blocks: [v]_p collects indices within ``width`` of p."""

    def __init__(self, system, width=None):
        self.system = system
        if width is None:
            width = system.N0 + RECOUPE_MARGIN
        if width != int(width) or int(width) <= system.N0:
            raise InputError(
                f"recoupe width must be an integer above N0 = {system.N0}"
            )
        self.width = int(width)

    def apply(self, v, p):
        upper = min(p + self.width, self.system.p_max)
        out = self.system.lowpass(v, upper)
        if p - self.width - 1 >= 0:
            out = out - self.system.lowpass(v, p - self.width - 1)
        return out


def _check_map_setup(u, kappa, target_system, source_system):
    if kappa.n0 is None:
        raise InputError("partition size not selected; run select_partition_size first")
    if target_system.size_n != 0:
        raise InputError("target side must carry the size-0 partition")
    if source_system.size_n != kappa.n0:
        raise InputError(
            f"source side must carry the selected size n0 = {kappa.n0}, "
            f"got {source_system.size_n}"
        )
    if abs(target_system.period - kappa.period_out) > 1e-12 * kappa.period_out:
        raise InputError("target system period does not match the map's target period")
    if abs(source_system.period - kappa.period_in) > 1e-12 * kappa.period_in:
        raise InputError("source system period does not match the map's source period")
    target_system._check_grid(u)


def source_points(source_system):
    return np.arange(source_system.n_points) * (
        source_system.period / source_system.n_points
    )


def paracompose_global(u, kappa, target_system, source_system, recoupe=None):
    """kappa*_g u: compose each target block with the map, recoupe, and sum."""
    _check_map_setup(u, kappa, target_system, source_system)
    if recoupe is None:
        recoupe = Recoupe(source_system)
    x = source_points(source_system)
    composed_at = kappa.forward(x)
    acc = np.zeros(source_system.n_points, dtype=np.complex128)
    for p in range(target_system.p_max + 1):
        u_p = target_system.block(u, p)
        piece = GridFunction(kappa.period_in, evaluate_offgrid(u_p, composed_at))
        acc += recoupe.apply(piece, p).samples
    return GridFunction(kappa.period_in, acc)


def paracompose_linearized(u, kappa, source_system, pair):
    """kappa* u = u o kappa - Tdot_(u' o kappa) P.

    Only the periodic part P of the map enters the paraproduct: the linear
    ramp has no high-frequency content for the truncated operator to see.
    """
    if kappa.n0 is None:
        raise InputError("partition size not selected; run select_partition_size first")
    if abs(source_system.period - kappa.period_in) > 1e-12 * kappa.period_in:
        raise InputError("source system period does not match the map's source period")
    x = source_points(source_system)
    composed_at = kappa.forward(x)
    comp = GridFunction(kappa.period_in, evaluate_offgrid(u, composed_at))
    slope = GridFunction(kappa.period_in, evaluate_offgrid(u.derivative(), composed_at))
    pert = GridFunction(
        kappa.period_in, evaluate_offgrid(kappa.perturbation, x).real
    )
    correction = apply_Tdot(function_symbol(slope), pert, source_system, pair)
    return comp - correction


def remainder_line(u, kappa, target_system, source_system, pair, recoupe=None):
    """Linearization defect: u o kappa minus both paracomposition terms."""
    linearized = paracompose_linearized(u, kappa, source_system, pair)
    global_part = paracompose_global(u, kappa, target_system, source_system, recoupe)
    return linearized - global_part


def verify_linearization(
    kappa,
    target_system,
    source_system,
    pair,
    recoupe=None,
    j_range=range(4, 10),
    s=0.5,
    suite_id="linearization",
):
    """Fit the decay of the linearization defect on frequency-localized waves.

    Waves are normalized in H^s and the defect measured in H^s, so the
    expected slope is the full smoothing order -rho.
    """
    js = sorted(set(int(j) for j in j_range))
    if len(js) < 4:
        raise InputError("slope fit refused: need at least 4 scales")
    norms = []
    for j in js:
        if 2.0**j >= target_system.xi_max:
            raise InputError(f"scale 2^{j} exceeds the grid's top frequency")
        xi = 2.0**j
        u = unit_wave(target_system, j) * (1.0 + xi * xi) ** (-s / 2.0)
        defect = remainder_line(u, kappa, target_system, source_system, pair, recoupe)
        norms.append(sobolev_norm(defect, s))
    return make_decay_report(
        suite_id=suite_id,
        scales=js,
        norms=norms,
        expected_bound=-kappa.rho,
        tolerance=0.3,
        direction="upper",
        environment={
            "rho": kappa.rho,
            "m0": kappa.m0,
            "n0": kappa.n0,
            "p0": kappa.p0,
            "sobolev_s": s,
            "offset_N": pair.N,
            "grid": source_system.n_points,
        },
    )


# ---------------------------------------------------------------------------
# Remainder smoothing audits for the global operator.


def measure_global_smoothing(
    kappa,
    target_system,
    source_system,
    recoupe=None,
    j_range=range(4, 10),
    suite_id="recoupe-smoothing",
):
    """Decay of kappa*_g u minus its map-smoothed variant on localized waves.

    Replacing kappa by its lowpass S_p kappa inside block p changes the
    output by a rho-regularized remainder; the L2 defect on unit waves at
    2^j should decay with slope at most -rho.
    """
    _check_map_setup(unit_wave(target_system, 0), kappa, target_system, source_system)
    if recoupe is None:
        recoupe = Recoupe(source_system)
    js = sorted(set(int(j) for j in j_range))
    if len(js) < 4:
        raise InputError("slope fit refused: need at least 4 scales")
    x = source_points(source_system)
    smoothed_points = {}

    def points_for(p):
        if p not in smoothed_points:
            sp = source_system.lowpass(kappa.perturbation, p)
            smoothed_points[p] = kappa.c * x + sp.samples.real
        return smoothed_points[p]

    norms = []
    for j in js:
        if 2.0**j >= target_system.xi_max:
            raise InputError(f"scale 2^{j} exceeds the grid's top frequency")
        u = unit_wave(target_system, j)
        exact = paracompose_global(u, kappa, target_system, source_system, recoupe)
        acc = np.zeros(source_system.n_points, dtype=np.complex128)
        for p in range(target_system.p_max + 1):
            u_p = target_system.block(u, p)
            if not np.any(u_p.spectrum):
                continue
            piece = GridFunction(kappa.period_in, evaluate_offgrid(u_p, points_for(p)))
            acc += recoupe.apply(piece, p).samples
        norms.append(lp_norm(exact - GridFunction(kappa.period_in, acc), 2))
    return make_decay_report(
        suite_id=suite_id,
        scales=js,
        norms=norms,
        expected_bound=-kappa.rho,
        tolerance=0.3,
        direction="upper",
        environment={
            "rho": kappa.rho,
            "n0": kappa.n0,
            "recoupe_width": recoupe.width,
            "grid": source_system.n_points,
        },
    )


def measure_block_recoupe_defect(
    kappa,
    u,
    target_system,
    source_system,
    recoupe=None,
    p_range=range(4, 10),
    suite_id="block-recoupe",
):
    """Per-block recoupe truncation against the lemma rate 2^(-p rho).

    For each block index p the defect [u_p o S_p kappa]_p - u_p o S_p kappa
    is measured in L2 relative to ||u_p||, valid where the smoothed
    derivative keeps its lower bound m0/2 (checked, since the formula
    threshold p0 usually sits beyond any feasible grid).
    """
    _check_map_setup(u, kappa, target_system, source_system)
    if recoupe is None:
        recoupe = Recoupe(source_system)
    ps = sorted(set(int(p) for p in p_range))
    if len(ps) < 4:
        raise InputError("slope fit refused: need at least 4 scales")
    x = source_points(source_system)
    ratios = []
    measured_c = 0.0
    for p in ps:
        if p > target_system.p_max:
            raise InputError(f"block index {p} exceeds the target partition")
        sp = source_system.lowpass(kappa.perturbation, p)
        smoothed_kp = kappa.c + sp.derivative().samples.real
        if float(np.min(smoothed_kp)) < kappa.m0 / 2.0:
            raise AuditError(
                f"smoothed derivative drops below m0/2 at block {p}; "
                "the truncation rate is not guaranteed there"
            )
        u_p = target_system.block(u, p)
        block_norm = lp_norm(u_p, 2)
        if block_norm <= 1e-13 * lp_norm(u, 2):
            raise InputError(f"probe function has an empty block at p = {p}")
        piece = GridFunction(
            kappa.period_in, evaluate_offgrid(u_p, kappa.c * x + sp.samples.real)
        )
        defect = recoupe.apply(piece, p) - piece
        ratio = lp_norm(defect, 2) / block_norm
        ratios.append(ratio)
        measured_c = max(measured_c, ratio * 2.0 ** (p * kappa.rho))
    return make_decay_report(
        suite_id=suite_id,
        scales=ps,
        norms=ratios,
        expected_bound=-kappa.rho,
        tolerance=0.3,
        direction="upper",
        environment={
            "rho": kappa.rho,
            "measured_constant": measured_c,
            "recoupe_width": recoupe.width,
            "grid": source_system.n_points,
        },
    )


# ---------------------------------------------------------------------------
# Symbol conjugation.


def conjugated_symbol(h, kappa, source_system):
    """Push a separable symbol through the map.

    Zeroth term: coefficients compose with the map and each profile of
    homogeneity d picks up the Jacobian factor (k')^(-d); the two
    determinant factors cancel on the diagonal.  First term (present when
    rho >= 1): differentiating the averaged-Jacobian argument in the
    conjugation formula leaves, at y = x,

        (i/2)(d - 1) (c o kappa) k'' / (k')^(d+1) * m'(xi)

    per separable piece, using that the xi-derivative of a homogeneity-d
    profile obeys xi m''(xi) = (d - 1) m'(xi).  Expansion terms beyond the
    first are out of scope; they vanish anyway for affine maps.
    """
    if kappa.n0 is None:
        raise InputError("partition size not selected; run select_partition_size first")
    for _, m in h.terms:
        if m.homogeneity is None:
            raise InputError("conjugation needs homogeneous profiles with declared degree")
    x = source_points(source_system)
    composed_at = kappa.forward(x)
    kprime = kappa.derivative_at(x)
    terms = []
    for c, m in h.terms:
        comp = evaluate_offgrid(c, composed_at)
        coeff0 = GridFunction(kappa.period_in, comp * kprime ** (-m.homogeneity))
        terms.append((coeff0, m))
    if kappa.rho >= 1.0:
        ksecond = evaluate_offgrid(kappa._dP.derivative(), x).real
        if np.max(np.abs(ksecond)) > 0.0:
            for c, m in h.terms:
                factor = 0.5 * (m.homogeneity - 1.0)
                if factor == 0.0:
                    continue
                dm = m.derivative()
                if _is_zero_profile(dm):
                    continue
                comp = evaluate_offgrid(c, composed_at)
                coeff1 = GridFunction(
                    kappa.period_in,
                    1j * factor * comp * ksecond / kprime ** (m.homogeneity + 1.0),
                )
                terms.append((coeff1, dm))
    epsilon = min(h.regularity_rho, kappa.rho, 2.0)
    label = f"{h.label}*" if h.label else ""
    return SeparableSymbol(terms, h.order_m, epsilon, label=label)


def verify_conjugation(
    h,
    kappa,
    target_system,
    source_system,
    pair_target,
    pair_source,
    recoupe=None,
    j_range=range(4, 10),
    suite_id="conjugation",
):
    """Fit the decay of the conjugation defect on unit-L2 localized waves.

    The defect kappa*_g T_h u - T_(h*) kappa*_g u should lose m - eps
    derivatives with eps = min(tau, rho), so its L2 norm on waves at 2^j
    grows with slope at most m - eps.
    """
    js = sorted(set(int(j) for j in j_range))
    if len(js) < 4:
        raise InputError("slope fit refused: need at least 4 scales")
    if recoupe is None:
        recoupe = Recoupe(source_system)
    epsilon = min(h.regularity_rho, kappa.rho, 2.0)
    hstar = conjugated_symbol(h, kappa, source_system)
    norms = []
    for j in js:
        if 2.0**j >= target_system.xi_max:
            raise InputError(f"scale 2^{j} exceeds the grid's top frequency")
        u = unit_wave(target_system, j)
        lhs = paracompose_global(
            apply_T(h, u, target_system, pair_target),
            kappa,
            target_system,
            source_system,
            recoupe,
        )
        rhs = apply_T(
            hstar,
            paracompose_global(u, kappa, target_system, source_system, recoupe),
            source_system,
            pair_source,
        )
        defect = lp_norm(lhs - rhs, 2)
        # rounding-level defects relative to the applications are exact
        # conjugation; clamp them so the fit does not chase machine noise
        if defect <= 1e-12 * max(lp_norm(lhs, 2), lp_norm(rhs, 2)):
            defect = 0.0
        norms.append(defect)
    return make_decay_report(
        suite_id=suite_id,
        scales=js,
        norms=norms,
        expected_bound=h.order_m - epsilon,
        tolerance=0.3,
        direction="upper",
        environment={
            "order_m": h.order_m,
            "tau": h.regularity_rho,
            "rho": kappa.rho,
            "epsilon": epsilon,
            "n0": kappa.n0,
            "offset_target": pair_target.N,
            "offset_source": pair_source.N,
            "recoupe_width": recoupe.width,
            "grid": source_system.n_points,
        },
    )
