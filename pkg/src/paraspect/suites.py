"""Named verification suites behind the command line.

Each suite packages one quantitative claim from the toolkit into a single
report: exact identities are checked at rounding level, smoothing orders
are checked as fitted slopes, and caps (oracle agreement, identity
paracomposition, audit flags) ride the report's extra pass conditions
with the measured values recorded in the environment.  Suites draw any
randomness from the configured seed, so a fixed seed reproduces every
report byte for byte on a given backend.
"""

import numpy as np

from .core import FrequencyProfile, GridFunction, InputError, lp_norm
from .dyadic import DyadicSystem, build_cutoff, measure_bernstein
from .paradiff import (
    AdmissibleCutoffPair,
    SeparableSymbol,
    apply_T,
    bony_remainder,
    function_symbol,
    measure_remainder_regularity,
    paraproduct,
    quadrature_oracle,
    smallest_admissible_offset,
    verify_composition,
)
from .paracomp import (
    identity_map,
    paracompose_global,
    prescribed_regularity_map,
    select_partition_size,
    verify_conjugation,
    verify_linearization,
)
from .reports import DecayReport, DispersionReport, make_decay_report, write_report
from .semiclassical import (
    cosine_velocity,
    measure_dispersion,
    measure_strichartz,
    standard_family,
)
from .waterwave import SurfaceState, demonstrate_reduction

DEFAULT_GRID_EXP = 12
DEFAULT_PERIOD = 2.0 * np.pi
DEFAULT_SEED = 2026

# the manufactured rough map is a fixture, not a sample: its seed is part
# of the fixture definition and does not follow the config seed
MAP_SEED = 7


class SuiteConfig:
    """Shared knobs for the verification suites.

    The grid exponent and period size the single-grid suites; the j-range
    bounds override each suite's default scale sweep; the seed drives
    every random draw.  Suites that are fully deterministic (unit-wave
    sweeps, the semiclassical measurements) ignore the seed.
    """

    def __init__(
        self,
        grid_exp=DEFAULT_GRID_EXP,
        period=DEFAULT_PERIOD,
        seed=DEFAULT_SEED,
        jmin=None,
        jmax=None,
    ):
        if grid_exp != int(grid_exp) or not (6 <= int(grid_exp) <= 16):
            raise InputError(f"grid exponent must be an integer in [6, 16], got {grid_exp}")
        if not (float(period) > 0.0) or not np.isfinite(float(period)):
            raise InputError(f"period must be positive and finite, got {period}")
        if seed != int(seed) or int(seed) < 0:
            raise InputError(f"seed must be a nonnegative integer, got {seed}")
        for name, val in (("jmin", jmin), ("jmax", jmax)):
            if val is not None and (val != int(val) or int(val) < 1):
                raise InputError(f"{name} must be a positive integer, got {val}")
        if jmin is not None and jmax is not None and int(jmin) > int(jmax):
            raise InputError(f"empty scale range: jmin {jmin} > jmax {jmax}")
        self.grid_exp = int(grid_exp)
        self.period = float(period)
        self.seed = int(seed)
        self.jmin = None if jmin is None else int(jmin)
        self.jmax = None if jmax is None else int(jmax)

    @property
    def n_points(self):
        return 2**self.grid_exp

    def j_range(self, default_lo, default_hi):
        lo = default_lo if self.jmin is None else self.jmin
        hi = default_hi if self.jmax is None else self.jmax
        if lo > hi:
            raise InputError(f"empty scale range: jmin {lo} > jmax {hi}")
        return range(lo, hi + 1)

    def base_environment(self):
        return {
            "grid": self.n_points,
            "period": self.period,
            "seed": self.seed,
        }


def _random_band_limited(rng, period, n_points, cutoff):
    freqs = 2.0 * np.pi * np.fft.fftfreq(n_points, d=period / n_points)
    spec = rng.standard_normal(n_points) + 1j * rng.standard_normal(n_points)
    spec[np.abs(freqs) > cutoff] = 0.0
    return GridFunction.from_spectrum(period, spec)


def _smooth_random_coefficient(rng, period, n_points, modes=6):
    x = np.arange(n_points) * (period / n_points)
    vals = np.zeros(n_points)
    base = 2.0 * np.pi / period
    for m in range(1, modes + 1):
        amp = float(rng.uniform(0.1, 0.5)) / m
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        vals += amp * np.cos(m * base * x + phase)
    return GridFunction(period, vals)


# ---------------------------------------------------------------------------
# Suite: dyadic partition and cross-size Bernstein stability.


def suite_dyadic(config):
    """Exact partition-of-unity residual plus Bernstein constants per size."""
    rng = np.random.default_rng(config.seed)
    sizes = (0, 1, 2, 3, 4)
    rel_residuals, abs_residuals = [], []
    for n in sizes:
        system = DyadicSystem(build_cutoff(n), config.period, config.n_points)
        spec = rng.standard_normal(config.n_points) + 1j * rng.standard_normal(
            config.n_points
        )
        f = GridFunction.from_spectrum(config.period, spec)
        res = system.partition_residual(f)
        abs_residuals.append(float(res))
        rel_residuals.append(float(res / lp_norm(f, np.inf)))
    # alpha = 0 is the size-uniform constant; derivative ratios normalized
    # by 2^(j alpha) pick up the wider support of large sizes instead
    bern = measure_bernstein(
        period=config.period,
        n_points=min(config.n_points, 4096),
        alpha=0,
        sizes=sizes,
        seed=config.seed,
    )
    residual_ok = max(abs_residuals) <= 1e-12
    env = config.base_environment()
    env.update(
        {
            "sizes": list(sizes),
            "residual_max": max(abs_residuals),
            "residuals": abs_residuals,
            "bernstein_factor": bern.environment["cross_size_factor"],
            "bernstein_per_size": bern.environment["per_size_constant"],
            "bernstein_pass": bool(bern.passed),
        }
    )
    return make_decay_report(
        "dyadic",
        list(sizes),
        rel_residuals,
        expected_bound=0.0,
        tolerance=0.0,
        environment=env,
        direction="none",
        extra_pass=residual_ok and bern.passed,
    )


# ---------------------------------------------------------------------------
# Suite: exact two-sided decomposition and remainder regularity drift.


def suite_bony(config):
    """Exact product decomposition on random pairs; remainder ratio drift."""
    system = DyadicSystem(build_cutoff(0), config.period, config.n_points)
    pair = AdmissibleCutoffPair(system)
    rng = np.random.default_rng(config.seed)
    cutoff = system.xi_max / 4.0
    worst = 0.0
    for _ in range(100):
        a = _random_band_limited(rng, config.period, config.n_points, cutoff)
        u = _random_band_limited(rng, config.period, config.n_points, cutoff)
        recon = (
            paraproduct(a, u, system, pair)
            + paraproduct(u, a, system, pair)
            + bony_remainder(a, u, system, pair)
        )
        gap = lp_norm(a * u - recon, np.inf)
        scale = lp_norm(a, np.inf) * lp_norm(u, np.inf)
        worst = max(worst, float(gap / scale))
    drift_report = measure_remainder_regularity(
        system, pair, j_range=config.j_range(4, 9)
    )
    env = config.base_environment()
    env.update(drift_report.environment)
    env.update({"decomposition_residual_max": worst, "pairs": 100})
    return DecayReport(
        suite_id="bony",
        scales=drift_report.scales,
        norms=drift_report.norms,
        fitted_slope=drift_report.fitted_slope,
        r_squared=drift_report.r_squared,
        expected_bound=drift_report.expected_bound,
        tolerance=drift_report.tolerance,
        passed=bool(drift_report.passed and worst <= 1e-12),
        environment=env,
        direction=drift_report.direction,
        n_floored=drift_report.n_floored,
    )


# ---------------------------------------------------------------------------
# Suite: paradifferential application against the quadrature oracle.


def _oracle_symbol(rng, period, n_points, shape):
    c = _smooth_random_coefficient(rng, period, n_points)
    if shape == 0:
        return function_symbol(c, regularity_rho=1.0)
    if shape == 1:
        return SeparableSymbol([(c, FrequencyProfile.power(1.5))], 1.5, 1.0)
    if shape == 2:
        return SeparableSymbol([(c * 1j, FrequencyProfile.i_xi())], 1.0, 1.0)
    if shape == 3:
        d = _smooth_random_coefficient(rng, period, n_points)
        # the order-0 term uses one() rather than power(0): a degree-0
        # homogeneous profile has no declared value at xi = 0
        return SeparableSymbol(
            [(c, FrequencyProfile.power(0.5)), (d, FrequencyProfile.one())],
            0.5,
            1.0,
        )
    ones = GridFunction(period, np.ones(n_points))
    return SeparableSymbol([(ones, FrequencyProfile.power(1.5))], 1.5, 2.0)


def suite_oracle(config):
    """Fast application versus the direct double-sum quadrature."""
    n_points = config.n_points if config.grid_exp <= 9 else 256
    system = DyadicSystem(build_cutoff(0), config.period, n_points)
    pair = AdmissibleCutoffPair(system)
    rng = np.random.default_rng(config.seed)
    errors = []
    for trial in range(25):
        a = _oracle_symbol(rng, config.period, n_points, trial % 5)
        u = _random_band_limited(rng, config.period, n_points, system.xi_max / 4.0)
        fast = apply_T(a, u, system, pair)
        slow = quadrature_oracle(a, u, system, pair)
        scale = max(lp_norm(slow, 2), lp_norm(fast, 2))
        errors.append(float(lp_norm(fast - slow, 2) / scale) if scale > 0 else 0.0)
    env = config.base_environment()
    env.update(
        {
            "grid": n_points,
            "offset_N": pair.N,
            "trials": 25,
            "max_relative_error": max(errors),
        }
    )
    return make_decay_report(
        "paradiff-oracle",
        list(range(25)),
        errors,
        expected_bound=0.0,
        tolerance=0.0,
        environment=env,
        direction="none",
        extra_pass=max(errors) <= 1e-8,
    )


# ---------------------------------------------------------------------------
# Suite: symbolic composition defect order.


def suite_composition(config):
    """Composition defect slope for the dispersive/transport symbol pair."""
    system = DyadicSystem(build_cutoff(0), config.period, config.n_points)
    # offset 2: deeper coefficient truncation floors the low-j defects
    # outright and the fit then spans the floor gap instead of the decay
    pair = AdmissibleCutoffPair(system, 2)
    x = np.arange(config.n_points) * (config.period / config.n_points)
    base = 2.0 * np.pi / config.period
    gamma_coeff = GridFunction(config.period, (1.0 + np.sin(base * x) ** 2) ** (-0.75))
    transport = GridFunction(
        config.period, 1.0 + 0.5 * np.cos(base * x) + 0.3 * np.sin(2.0 * base * x)
    )
    a = SeparableSymbol([(gamma_coeff, FrequencyProfile.power(1.5))], 1.5, 1.0)
    b = SeparableSymbol([(transport, FrequencyProfile.i_xi())], 1.0, 1.0)
    report = verify_composition(a, b, system, pair, j_range=config.j_range(4, 9))
    report.environment.update(config.base_environment())
    return report


# ---------------------------------------------------------------------------
# Suite: identity paracomposition exactness and linearity.


def suite_paracomp_id(config):
    """Identity map: global paracomposition reduces to the identity."""
    kappa = identity_map(config.period, config.n_points)
    select_partition_size(kappa)
    target = DyadicSystem(build_cutoff(0), config.period, config.n_points)
    source = DyadicSystem(build_cutoff(kappa.n0), config.period, config.n_points)
    rng = np.random.default_rng(config.seed)
    js = list(config.j_range(4, 9))
    norms = []
    for j in js:
        if 2.0**j >= target.xi_max:
            raise InputError(f"scale 2^{j} exceeds the grid's top frequency")
        u = _random_band_limited(rng, config.period, config.n_points, 2.0**j)
        out = paracompose_global(u, kappa, target, source)
        norms.append(float(lp_norm(out - u, np.inf) / lp_norm(u, np.inf)))
    u = _random_band_limited(rng, config.period, config.n_points, target.xi_max / 4.0)
    v = _random_band_limited(rng, config.period, config.n_points, target.xi_max / 4.0)
    lhs = paracompose_global(u * 0.7 + v * (-1.3), kappa, target, source)
    rhs = paracompose_global(u, kappa, target, source) * 0.7 + paracompose_global(
        v, kappa, target, source
    ) * (-1.3)
    lin = float(lp_norm(lhs - rhs, np.inf) / max(lp_norm(u, np.inf), lp_norm(v, np.inf)))
    env = config.base_environment()
    env.update(
        {
            "n0": kappa.n0,
            "identity_defect_max": max(norms),
            "linearity_defect": lin,
        }
    )
    return make_decay_report(
        "paracomp-id",
        js,
        norms,
        expected_bound=0.0,
        tolerance=0.0,
        environment=env,
        direction="none",
        extra_pass=max(norms) <= 1e-10 and lin <= 1e-12,
    )


# ---------------------------------------------------------------------------
# Suite: linearization remainder smoothing order.


def _rough_fixture(config):
    kappa = prescribed_regularity_map(
        config.period, config.n_points, rho=1.0, amplitude=0.3, seed=MAP_SEED
    )
    select_partition_size(kappa)
    target = DyadicSystem(build_cutoff(0), config.period, config.n_points)
    source = DyadicSystem(build_cutoff(kappa.n0), config.period, config.n_points)
    return kappa, target, source


def suite_linearization(config):
    """Linearization defect slope for the manufactured rough map."""
    kappa, target, source = _rough_fixture(config)
    pair = AdmissibleCutoffPair(source, smallest_admissible_offset(source))
    report = verify_linearization(
        kappa, target, source, pair, j_range=config.j_range(4, 9)
    )
    report.environment.update(config.base_environment())
    report.environment["map_seed"] = MAP_SEED
    return report


# ---------------------------------------------------------------------------
# Suite: conjugation defect order, transport and dispersive lanes.


def suite_conjugation(config):
    """Conjugation defect slopes through the rough map, both symbol lanes."""
    kappa, target, source = _rough_fixture(config)
    pt = AdmissibleCutoffPair(target, 2)
    ps = AdmissibleCutoffPair(source, smallest_admissible_offset(source))
    x = np.arange(config.n_points) * (config.period / config.n_points)
    base = 2.0 * np.pi / config.period
    v_coeff = GridFunction(
        config.period, 1.0 + 0.5 * np.cos(base * x) + 0.3 * np.sin(2.0 * base * x)
    )
    transport = SeparableSymbol([(v_coeff * 1j, FrequencyProfile.identity())], 1.0, 1.0)
    g_coeff = GridFunction(config.period, (1.0 + 0.4 * np.sin(base * x) ** 2) ** (-0.75))
    gamma = SeparableSymbol([(g_coeff, FrequencyProfile.power(1.5))], 1.5, 1.0)
    j_range = config.j_range(4, 9)
    rep_t = verify_conjugation(transport, kappa, target, source, pt, ps, j_range=j_range)
    rep_g = verify_conjugation(gamma, kappa, target, source, pt, ps, j_range=j_range)
    env = config.base_environment()
    env.update(rep_g.environment)
    env.update(
        {
            "map_seed": MAP_SEED,
            "transport_slope": rep_t.fitted_slope,
            "transport_bound": rep_t.expected_bound,
            "transport_tolerance": rep_t.tolerance,
            "transport_pass": bool(rep_t.passed),
        }
    )
    return DecayReport(
        suite_id="conjugation",
        scales=rep_g.scales,
        norms=rep_g.norms,
        fitted_slope=rep_g.fitted_slope,
        r_squared=rep_g.r_squared,
        expected_bound=rep_g.expected_bound,
        tolerance=rep_g.tolerance,
        passed=bool(rep_g.passed and rep_t.passed),
        environment=env,
        direction=rep_g.direction,
        n_floored=rep_g.n_floored,
    )


# ---------------------------------------------------------------------------
# Suite: water-wave symbol reduction through the flattening.


def suite_reduction(config):
    """Reduction defect slope for the cosine surface; flat surface floors."""
    x = np.arange(config.n_points) * (config.period / config.n_points)
    base = 2.0 * np.pi / config.period
    wave = SurfaceState(
        GridFunction(config.period, 0.3 * np.cos(base * x)),
        GridFunction(config.period, np.sin(base * x)),
    )
    flat = SurfaceState(
        GridFunction(config.period, np.zeros(config.n_points)),
        GridFunction(config.period, np.cos(base * x)),
    )
    j_range = config.j_range(4, 9)
    report = demonstrate_reduction(wave, j_range=j_range)
    flat_report = demonstrate_reduction(flat, j_range=j_range)
    # the flat surface's defect is pure roundoff amplified through the
    # order-3/2 symbols, around 1e-10 at the top scale; 1e-8 is the
    # documented floor for it, not the report's absolute noise floor
    flat_norm_max = max(flat_report.norms)
    flat_floored = flat_norm_max <= 1e-8
    env = config.base_environment()
    env.update(report.environment)
    env.update(
        {
            "flat_floored": flat_floored,
            "flat_norm_max": flat_norm_max,
        }
    )
    return DecayReport(
        suite_id="reduction",
        scales=report.scales,
        norms=report.norms,
        fitted_slope=report.fitted_slope,
        r_squared=report.r_squared,
        expected_bound=report.expected_bound,
        tolerance=report.tolerance,
        passed=bool(report.passed and flat_floored),
        environment=env,
        direction=report.direction,
        n_floored=report.n_floored,
    )


# ---------------------------------------------------------------------------
# Suites: semiclassical dispersive decay and quartic-in-time gain.


def _semiclassical_families(config):
    js = config.j_range(5, 9)
    free = standard_family(js)
    transport = standard_family(js, velocity=cosine_velocity(0.4))
    return free, transport


def _fixture_env(report):
    env = {
        "ratio": getattr(report, "ratio", None),
        "fitted_slope": report.fitted_slope,
        "passed": bool(report.passed),
    }
    env.update(report.environment)
    return env


def suite_dispersion(config):
    """Normalized sup-norm decay for the free and transported fixtures."""
    free, transport = _semiclassical_families(config)
    rep_free = measure_dispersion(free)
    rep_w = measure_dispersion(transport)
    rows = [dict(r, fixture="free") for r in rep_free.table]
    rows += [dict(r, fixture="transport") for r in rep_w.table]
    worst = rep_free if abs(rep_free.fitted_slope) >= abs(rep_w.fitted_slope) else rep_w
    env = config.base_environment()
    env.update(
        {
            "free": _fixture_env(rep_free),
            "transport": _fixture_env(rep_w),
            "velocity_amplitude": 0.4,
        }
    )
    return DispersionReport(
        suite_id="dispersion",
        table=rows,
        ratio=max(rep_free.ratio, rep_w.ratio),
        fitted_slope=worst.fitted_slope,
        expected_bound=0.0,
        tolerance=rep_free.tolerance,
        passed=bool(rep_free.passed and rep_w.passed),
        environment=env,
    )


def suite_strichartz(config):
    """Quartic-in-time gain flatness for the free and transported fixtures."""
    free, transport = _semiclassical_families(config)
    rep_free = measure_strichartz(free)
    rep_w = measure_strichartz(transport)
    env = config.base_environment()
    env.update(
        {
            "free": _fixture_env(rep_free),
            "transport": _fixture_env(rep_w),
            "velocity_amplitude": 0.4,
        }
    )
    return make_decay_report(
        "strichartz",
        list(rep_free.scales) + list(rep_w.scales),
        list(rep_free.norms) + list(rep_w.norms),
        expected_bound=0.0,
        tolerance=rep_free.tolerance,
        environment=env,
        direction="flat",
        extra_pass=bool(rep_free.passed and rep_w.passed),
    )


# ---------------------------------------------------------------------------
# Registry and the one-call runner.


REGISTRY = {
    "dyadic": suite_dyadic,
    "bony": suite_bony,
    "paradiff-oracle": suite_oracle,
    "composition": suite_composition,
    "paracomp-id": suite_paracomp_id,
    "linearization": suite_linearization,
    "conjugation": suite_conjugation,
    "reduction": suite_reduction,
    "dispersion": suite_dispersion,
    "strichartz": suite_strichartz,
}


def run_suite(name, config=None, out_dir=None, fmt="json"):
    """Run one named suite ("all" runs every suite) and write its reports.

    Returns (reports, paths).  Reports are written only when out_dir is
    given; the format selects the primary document, a CSV mirror is
    always produced.
    """
    config = SuiteConfig() if config is None else config
    if name == "all":
        names = list(REGISTRY)
    elif name in REGISTRY:
        names = [name]
    else:
        known = ", ".join(sorted(REGISTRY))
        raise InputError(f"unknown suite {name!r}; known suites: {known}, all")
    reports, paths = [], []
    for nm in names:
        report = REGISTRY[nm](config)
        reports.append(report)
        if out_dir is not None:
            paths.extend(write_report(report, out_dir, fmt=fmt))
    return reports, paths
