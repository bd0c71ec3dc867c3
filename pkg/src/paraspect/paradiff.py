"""Paradifferential operators built on a dyadic system.

Implements smoothed-coefficient operators T_a and their truncated variant,
paraproducts with the Bony remainder, first-order symbolic calculus
(composition and adjoint) for separable symbols, and a direct double-sum
quadrature oracle used to cross-check the fast block implementation.
"""

import math

import numpy as np

from .core import (
    AdmissibilityError,
    FrequencyProfile,
    GridFunction,
    InputError,
    apply_multiplier,
    lp_norm,
    smoothstep,
)
from .reports import make_decay_report

ORACLE_GRID_LIMIT = 512


class SeparableSymbol:
    """Symbol a(x, xi) = sum_i c_i(x) m_i(xi) with a finite term list.

    order_m is the frequency growth exponent; when profiles declare a
    homogeneity degree the largest one must agree with order_m.
    regularity_rho is the declared coefficient smoothness used by the
    symbolic calculus to decide how many expansion terms are meaningful.
    """

    def __init__(self, terms, order_m, regularity_rho, label=""):
        terms = [(c, m) for c, m in terms]
        if not terms:
            raise InputError("a separable symbol needs at least one term")
        first = terms[0][0]
        for c, m in terms:
            if not isinstance(c, GridFunction) or not isinstance(m, FrequencyProfile):
                raise InputError("terms must pair a GridFunction with a FrequencyProfile")
            first._check_compatible(c)
        self.terms = terms
        self.order_m = float(order_m)
        self.regularity_rho = float(regularity_rho)
        if self.regularity_rho < 0:
            raise InputError("regularity_rho must be nonnegative")
        self.label = label
        declared = [m.homogeneity for _, m in terms if m.homogeneity is not None]
        if declared and abs(max(declared) - self.order_m) > 1e-9:
            raise InputError(
                f"order {self.order_m} does not match the top homogeneity "
                f"degree {max(declared)} of the profiles"
            )

    @property
    def period(self):
        return self.terms[0][0].period

    @property
    def n(self):
        return self.terms[0][0].n

    def seminorm(self, k, system):
        """Symbol seminorm estimate of differentiation depth k.

        Sum over terms of the coefficient Zygmund norm (exponent
        regularity_rho) times the largest weighted profile derivative
        (1+|xi|)^(alpha-m) |m^(alpha)(xi)| over a dyadic sample with
        |xi| >= 1/2 and alpha <= k.  Derivatives beyond the profile's
        analytic chain are rejected.
        """
        k = int(k)
        if k < 0:
            raise InputError("derivative depth k must be nonnegative")
        sample = 2.0 ** np.arange(-1.0, 13.0, 0.5)
        sample = np.concatenate([-sample[::-1], sample])
        total = 0.0
        for c, m in self.terms:
            coeff = system.zygmund(c, self.regularity_rho)
            prof = m
            best = 0.0
            for alpha in range(k + 1):
                w = (1.0 + np.abs(sample)) ** (alpha - self.order_m)
                best = max(best, float(np.max(w * np.abs(prof(sample)))))
                if alpha < k:
                    prof = prof.derivative()
            total += coeff * best
        return total

    def conj(self):
        return SeparableSymbol(
            [(c.conj(), conjugate_profile(m)) for c, m in self.terms],
            self.order_m,
            self.regularity_rho,
            label=f"conj({self.label})" if self.label else "",
        )

    def __repr__(self):
        return (
            f"SeparableSymbol({len(self.terms)} terms, order={self.order_m:g}, "
            f"rho={self.regularity_rho:g})"
        )


def function_symbol(c, regularity_rho=0.0):
    """Order-zero symbol a(x, xi) = c(x)."""
    return SeparableSymbol([(c, FrequencyProfile.one())], 0.0, regularity_rho)


def multiplier_symbol(profile, like, regularity_rho=2.0):
    """Constant-coefficient symbol a(x, xi) = m(xi) on the grid of ``like``."""
    ones = like.with_samples(np.ones(like.n, dtype=np.complex128))
    if profile.homogeneity is None:
        raise InputError("multiplier_symbol needs a homogeneous profile for its order")
    return SeparableSymbol([(ones, profile)], profile.homogeneity, regularity_rho)


def conjugate_profile(m):
    """Pointwise complex conjugate of a profile, derivative chain included."""
    thunk = None
    if m._deriv_thunk is not None:
        thunk = lambda: conjugate_profile(m.derivative())
    zv = FrequencyProfile._UNSET if m.zero_value is None else np.conj(m.zero_value)
    return FrequencyProfile(
        lambda xi: np.conj(np.asarray(m(xi), dtype=np.complex128)),
        homogeneity=m.homogeneity,
        zero_value=zv,
        deriv=thunk,
        label=f"conj({m.label})" if m.label else "",
    )


# ---------------------------------------------------------------------------
# Cutoff pair: truncation offset N plus the induced two-frequency geometry.


class AdmissibleCutoffPair:
    """Truncation offset N together with the induced cutoff geometry.

    The pair fixes chi(theta, xi) = sum_p phi_(p-N)(theta) w_p(xi) implicitly
    through N and the system's profile, and the low-frequency gate psi
    ramping from 0 to 1 on [2^(-n-1), 2^(-n)].  Construction measures the
    induced support constants eps1 (full plateau) and eps2 (vanishing edge)
    over a dyadic sample and rejects the pair unless
    0 < eps1 < eps2 < 1.
    """

    def __init__(self, system, offset=None):
        n = system.size_n
        if offset is None:
            offset = n + 6
        if offset != int(offset):
            raise InputError(f"truncation offset must be an integer, got {offset}")
        offset = int(offset)
        if offset <= n:
            raise AdmissibilityError(
                f"truncation offset N={offset} must exceed the system size n={n}"
            )
        self.system = system
        self.N = offset
        self.psi_inner = 2.0 ** (-n - 1)
        self.epsilon1, self.epsilon2 = self._support_check()

    def psi_values(self, xi):
        """Low-frequency gate: 0 below 2^(-n-1), 1 above 2^(-n), smooth between.

        The mean mode xi = 0 passes: the gate closes only on a punctured
        neighborhood of 0, so on a periodic lattice a constant symbol acts
        as the exact identity.  Profiles decide their own value at 0.
        """
        xi = np.abs(np.asarray(xi, dtype=np.float64))
        vals = smoothstep((xi - self.psi_inner) / self.psi_inner)
        return np.where(xi == 0.0, 1.0, vals)

    def _block_profile(self, xi, p):
        cut = self.system.cutoff
        if p == 0:
            return cut(xi)
        return cut(xi / 2.0**p) - cut(xi / 2.0 ** (p - 1))

    def chi_values(self, theta, xi):
        """Uncapped two-frequency cutoff sum_p phi_(p-N)(theta) w_p(xi)."""
        theta = np.asarray(theta, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        cut = self.system.cutoff
        # the block telescope reaches 1 only once 2^p_top * plateau_edge
        # clears the largest sampled frequency; plateau_edge can be ~1/4
        p_top = max(1, math.ceil(math.log2(max(np.max(np.abs(xi)), 1.0))) + 4)
        total = np.zeros(np.broadcast(theta, xi).shape)
        for p in range(p_top + 1):
            total += cut(theta / 2.0 ** (p - self.N)) * self._block_profile(xi, p)
        return total

    def _support_check(self):
        cut = self.system.cutoff
        plat = cut.plateau_edge
        supp = cut.support_edge
        xi_samples = np.concatenate([[0.0], 2.0 ** np.arange(-2.0, 13.0, 0.25)])
        eps1 = math.inf
        eps2 = 0.0
        for xi in xi_samples:
            active = [
                p
                for p in range(20)
                if (xi < supp if p == 0 else 2.0 ** (p - 1) * plat < xi < 2.0**p * supp)
            ]
            theta_one = 2.0 ** (min(active) - self.N) * plat
            theta_zero = 2.0 ** (max(active) - self.N) * supp
            eps1 = min(eps1, theta_one / (1.0 + xi))
            eps2 = max(eps2, theta_zero / (1.0 + xi))
            one_probe = self.chi_values(0.98 * theta_one, xi)
            zero_probe = self.chi_values(1.02 * theta_zero, xi)
            if abs(one_probe - 1.0) > 1e-12 or abs(zero_probe) > 1e-14:
                raise AdmissibilityError(
                    f"cutoff pair fails its support spot check at xi={xi:g}"
                )
        if not 0.0 < eps1 < eps2 < 1.0:
            raise AdmissibilityError(
                f"induced support constants eps1={eps1:g}, eps2={eps2:g} are "
                "not ordered inside (0, 1); increase the truncation offset"
            )
        return eps1, eps2

    def __repr__(self):
        return (
            f"AdmissibleCutoffPair(N={self.N}, eps1={self.epsilon1:.3g}, "
            f"eps2={self.epsilon2:.3g})"
        )


def smallest_admissible_offset(system, cap=None):
    """Smallest truncation offset the support check accepts for ``system``.

    Slope measurements want a tight offset: a wide one keeps the smoothed
    coefficient saturated at the full function over the probed scales and
    the fitted decay never reaches its asymptotic order.  The default
    offset stays size + 6 for operator use; call this when fitting.
    """
    top = system.size_n + 6 if cap is None else int(cap)
    for offset in range(system.size_n + 1, top + 1):
        try:
            return AdmissibleCutoffPair(system, offset).N
        except AdmissibilityError:
            continue
    raise AdmissibilityError(
        f"no admissible truncation offset at or below {top} for size {system.size_n}"
    )


# ---------------------------------------------------------------------------
# Operator application.


def _check_setup(a, u, system):
    system._check_grid(u)
    if a.period != u.period or a.n != u.n:
        raise InputError("symbol coefficients do not live on the target grid")
    for _, m in a.terms:
        if m.homogeneity is not None and m.homogeneity < 0 and m.zero_value is None:
            raise InputError(
                "homogeneous profile of negative degree needs a declared xi=0 value"
            )


def _smoothed_sum(a, u, system, pair, include_tail):
    _check_setup(a, u, system)
    N = pair.N
    acc = np.zeros(u.n, dtype=np.complex128)
    for p in range(1, system.p_max + 1):
        up = system.block(u, p)
        for c, m in a.terms:
            acc += system.lowpass(c, p - N).samples * apply_multiplier(up, m).samples
    if include_tail:
        gate = pair.psi_values(u.freqs) * system.lowpass_multiplier(0)
        u0 = apply_multiplier(u, gate)
        for c, m in a.terms:
            acc += system.lowpass(c, -N).samples * apply_multiplier(u0, m).samples
    return u.with_samples(acc)


def apply_T(a, u, system, pair):
    """Full smoothed-coefficient operator, low-frequency tail included.

    Per term, sum over p >= 1 of S_(p-N) c * m(D) Delta_p u plus the tail
    S_(-N) c * m(D) applied to the psi-gated lowpass piece of u.
    """
    return _smoothed_sum(a, u, system, pair, include_tail=True)


def apply_Tdot(a, u, system, pair):
    """Truncated variant: the same block sum without the low-frequency tail."""
    return _smoothed_sum(a, u, system, pair, include_tail=False)


# ---------------------------------------------------------------------------
# Paraproducts and remainders (coefficient form: a is a GridFunction).


def _block_sum(a, u, system, pair, p_start):
    acc = np.zeros(u.n, dtype=np.complex128)
    for p in range(p_start, system.p_max + 1):
        acc += system.lowpass(a, p - pair.N).samples * system.block(u, p).samples
    return u.with_samples(acc)


def paraproduct(a, u, system, pair):
    """Low-high paraproduct sum over p >= N of S_(p-N) a Delta_p u.

    The sum starts at p = N (where the smoothing window S_(p-N) first
    reaches block 0) so that the paraproduct pair plus the remainder tile
    every block pair exactly; starting one index later would drop the
    (0, N) pairs and break the reconstruction identity.
    """
    u._check_compatible(a)
    return _block_sum(a, u, system, pair, max(pair.N, 1))


def bony_remainder(a, u, system, pair):
    """Diagonal part sum over |j-k| <= N-1 of Delta_j a Delta_k u."""
    u._check_compatible(a)
    blocks_a = [b.samples for b in system.blocks(a)]
    blocks_u = [b.samples for b in system.blocks(u)]
    acc = np.zeros(u.n, dtype=np.complex128)
    for j, aj in enumerate(blocks_a):
        lo = max(0, j - pair.N + 1)
        hi = min(len(blocks_u) - 1, j + pair.N - 1)
        for k in range(lo, hi + 1):
            acc += aj * blocks_u[k]
    return u.with_samples(acc)


def truncated_remainder(v, w, system, pair):
    """Remainder of the truncated paraproducts: vw - Tdot_v w - Tdot_w v."""
    v._check_compatible(w)
    dot_vw = _block_sum(v, w, system, pair, 1)
    dot_wv = _block_sum(w, v, system, pair, 1)
    return (v * w) - dot_vw - dot_wv


def remainder_gap(v, w, system, pair):
    """Finite low-frequency sum separating the two remainders.

    Equals bony_remainder(v, w) - truncated_remainder(v, w) exactly:
    sum over k = 1 .. N-1 of S_(k-N) v Delta_k w + S_(k-N) w Delta_k v.
    """
    v._check_compatible(w)
    acc = np.zeros(v.n, dtype=np.complex128)
    for k in range(1, min(pair.N - 1, system.p_max) + 1):
        acc += system.lowpass(v, k - pair.N).samples * system.block(w, k).samples
        acc += system.lowpass(w, k - pair.N).samples * system.block(v, k).samples
    return v.with_samples(acc)


def audit_paraproduct_support(a, u, system, pair):
    """Largest relative spectral leak of paraproduct summands.

    Each summand S_(p-N) a Delta_p u must stay inside the block support
    widened by the smoothing window's bandwidth.  Blocks whose widened
    window exceeds the grid's top frequency are skipped (their upper edge
    is not representable).  Returns the worst observed leak.
    """
    u._check_compatible(a)
    worst = 0.0
    for p in range(max(pair.N, 1), system.p_max + 1):
        lo, hi = system.exact_support(p)
        width = 2.0 ** (p - pair.N) * system.cutoff.support_edge
        if hi + width >= system.xi_max:
            continue
        term = system.lowpass(a, p - pair.N) * system.block(u, p)
        mags = np.abs(term.spectrum)
        peak = float(np.max(mags))
        if peak == 0.0:
            continue
        outside = (np.abs(u.freqs) < lo - width - 1e-12) | (
            np.abs(u.freqs) > hi + width + 1e-12
        )
        worst = max(worst, float(np.max(mags[outside], initial=0.0)) / peak)
    return worst


def measure_remainder_regularity(system, pair, alpha=0.6, beta=0.4, j_range=range(4, 10)):
    """Remainder smoothing ratios against an explicitly rough coefficient.

    Pairs a lacunary cosine sum of Hoelder exponent alpha with unimodular
    waves at frequency 2^j and reports the Zygmund norm of the remainder at
    exponent alpha + beta, normalized by the coefficient norm and 2^(j beta).
    The ratios should stay bounded across j; the report records their drift.
    """
    js = sorted(set(int(j) for j in j_range))
    x = np.arange(system.n_points) * (system.period / system.n_points)
    q_top = int(math.log2(system.xi_max)) - 2
    samples = np.zeros(system.n_points, dtype=np.complex128)
    for q in range(q_top + 1):
        samples += 2.0 ** (-q * alpha) * np.cos(2.0**q * x)
    rough = GridFunction(system.period, samples)
    norm_a = system.zygmund(rough, alpha)
    ratios = []
    for j in js:
        if 2.0**j >= system.xi_max:
            raise InputError(f"scale 2^{j} exceeds the grid's top frequency")
        u = unit_wave(system, j)
        rem = bony_remainder(rough, u, system, pair)
        ratios.append(system.zygmund(rem, alpha + beta) / (norm_a * 2.0 ** (j * beta)))
    drift = max(ratios) / min(ratios)
    return make_decay_report(
        suite_id="bony-regularity",
        scales=js,
        norms=ratios,
        expected_bound=0.0,
        tolerance=0.35,
        direction="flat",
        environment={
            "alpha": alpha,
            "beta": beta,
            "ratio_drift": drift,
            "offset_N": pair.N,
            "size_n": system.size_n,
            "grid": system.n_points,
        },
        extra_pass=drift <= 3.0,
    )


# ---------------------------------------------------------------------------
# Symbolic calculus.


def _is_zero_profile(m):
    vals = np.asarray(m(np.array([1.0, 2.0, 5.0])))
    return float(np.max(np.abs(vals))) == 0.0 and m.zero_value == 0.0


def _calculus_depth(rho):
    if rho <= 0:
        raise InputError("symbolic calculus needs declared regularity rho > 0")
    if rho > 2:
        raise InputError("symbol classes beyond rho = 2 are out of scope")
    return rho > 1


def compose_symbols(a, b):
    """First-order composition a # b = ab - i d_xi a d_x b (second term
    only when min(rho_a, rho_b) > 1).

    Profiles must carry analytic derivatives for the first-order term;
    coefficients are differentiated spectrally.
    """
    rho = min(a.regularity_rho, b.regularity_rho)
    second = _calculus_depth(rho)
    if a.period != b.period or a.n != b.n:
        raise InputError("symbols must share a grid to compose")
    terms = [(ca * cb, ma * mb) for ca, ma in a.terms for cb, mb in b.terms]
    if second:
        for ca, ma in a.terms:
            dm = ma.derivative()
            if _is_zero_profile(dm):
                continue
            for cb, mb in b.terms:
                coeff = (ca * cb.derivative()) * (-1j)
                terms.append((coeff, dm * mb))
    order = a.order_m + b.order_m
    rho_out = rho - 1.0 if second else rho
    return SeparableSymbol(
        terms,
        order,
        rho_out,
        label=f"({a.label})#({b.label})" if a.label and b.label else "",
    )


def adjoint_symbol(a):
    """First-order adjoint conj(a) - i d_xi d_x conj(a) (second term only
    when rho > 1)."""
    second = _calculus_depth(a.regularity_rho)
    conj = a.conj()
    terms = list(conj.terms)
    if second:
        for c, m in conj.terms:
            dm = m.derivative()
            if _is_zero_profile(dm):
                continue
            terms.append((c.derivative() * (-1j), dm))
    rho_out = a.regularity_rho - 1.0 if second else a.regularity_rho
    return SeparableSymbol(terms, a.order_m, rho_out, label=f"adj({a.label})" if a.label else "")


def unit_wave(system, j):
    """Unit-L2 wave at frequency 2^j on the system's grid."""
    spec = np.zeros(system.n_points, dtype=np.complex128)
    idx = int(round(2.0**j * system.period / (2.0 * np.pi)))
    spec[idx] = 1.0 / math.sqrt(system.period)
    return GridFunction.from_spectrum(system.period, spec)


def verify_composition(a, b, system, pair, j_range=range(4, 10), suite_id="composition"):
    """Measure the operator-composition defect against its expected order.

    Applies T_a T_b - T_(a#b) to unit-L2 waves at frequencies 2^j and fits
    the slope of the log2 defect norms; the slope should not exceed
    order(a) + order(b) - rho.  Requires declared rho >= 1 on both symbols
    and at least four scales.
    """
    if a.regularity_rho < 1 or b.regularity_rho < 1:
        raise InputError("composition verification needs declared rho >= 1")
    js = sorted(set(int(j) for j in j_range))
    if len(js) < 4:
        raise InputError("slope fit refused: need at least 4 scales")
    rho = min(min(a.regularity_rho, b.regularity_rho), 2.0)
    sharp = compose_symbols(a, b)
    norms = []
    for j in js:
        if 2.0**j >= system.xi_max:
            raise InputError(f"scale 2^{j} exceeds the grid's top frequency")
        u = unit_wave(system, j)
        composed = apply_T(a, apply_T(b, u, system, pair), system, pair)
        direct = apply_T(sharp, u, system, pair)
        defect = lp_norm(composed - direct, 2)
        # a defect at rounding level relative to the applications themselves
        # is exact composition, not decay to measure; clamp it to the floor
        # so the fit does not chase amplified machine noise
        if defect <= 1e-12 * max(lp_norm(direct, 2), lp_norm(composed, 2)):
            defect = 0.0
        norms.append(defect)
    return make_decay_report(
        suite_id=suite_id,
        scales=js,
        norms=norms,
        expected_bound=a.order_m + b.order_m - rho,
        tolerance=0.3,
        direction="upper",
        environment={
            "order_a": a.order_m,
            "order_b": b.order_m,
            "rho": rho,
            "offset_N": pair.N,
            "size_n": system.size_n,
            "grid": system.n_points,
        },
    )


# ---------------------------------------------------------------------------
# Quadrature oracle.


def quadrature_oracle(a, u, system, pair):
    """Direct double-sum evaluation of the defining frequency integral.

    Builds the full two-frequency cutoff matrix chi(theta, eta) on the
    discrete lattice (theta wrapped modulo the grid, matching the aliasing
    of pointwise products) and contracts it against the gated spectrum of
    u.  O(grid^2) memory and time; grids above ORACLE_GRID_LIMIT are
    rejected.
    """
    _check_setup(a, u, system)
    n_pts = u.n
    if n_pts > ORACLE_GRID_LIMIT:
        raise InputError(
            f"oracle is quadratic in the grid; limit is {ORACLE_GRID_LIMIT} points"
        )
    idx = np.arange(n_pts)
    theta_idx = (idx[:, None] - idx[None, :]) % n_pts
    chi = np.zeros((n_pts, n_pts))
    for p in range(system.p_max + 1):
        low = np.real(system.lowpass_multiplier(p - pair.N))
        chi += low[theta_idx] * np.real(system.block_multiplier(p))[None, :]
    gated = pair.psi_values(u.freqs) * u.spectrum
    peak = float(np.max(np.abs(gated)))
    populated = np.abs(gated) > 1e-15 * peak if peak > 0 else np.zeros(n_pts, bool)
    out = np.zeros(n_pts, dtype=np.complex128)
    for c, m in a.terms:
        mvals = np.zeros(n_pts, dtype=np.complex128)
        if populated.any():
            mvals[populated] = m(u.freqs[populated])
        out += (c.spectrum[theta_idx] * chi) @ (mvals * gated)
    return GridFunction.from_spectrum(u.period, out)
