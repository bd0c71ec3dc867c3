"""End-to-end acceptance checks, one test and one printed verdict per criterion.

Each criterion runs the corresponding verification suite at its pinned
fixture and asserts the stated caps, slopes, and runtime budget.  The
two semiclassical sweeps are module-scoped fixtures: the audit criterion
reads the very runs the decay criteria produced.
"""

import time

import pytest

from paraspect.semiclassical import (
    CONSERVATION_TOL,
    RICHARDSON_WINDOW,
    measure_parametrix_defect,
)
from paraspect.suites import REGISTRY, SuiteConfig

CONFIG = SuiteConfig()


def timed_suite(name):
    t0 = time.perf_counter()
    report = REGISTRY[name](CONFIG)
    return report, time.perf_counter() - t0


def verdict(number, passed, detail):
    print(f"criterion {number:02d}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, detail


@pytest.fixture(scope="module")
def dispersion_run():
    return timed_suite("dispersion")


@pytest.fixture(scope="module")
def strichartz_run():
    return timed_suite("strichartz")


def test_criterion_01_dyadic_partition_and_bernstein():
    report, elapsed = timed_suite("dyadic")
    env = report.environment
    ok = (
        report.passed
        and env["residual_max"] <= 1e-12
        and env["bernstein_factor"] <= 2.0
        and elapsed < 10.0
    )
    verdict(
        1,
        ok,
        f"residual {env['residual_max']:.2e}, bernstein factor "
        f"{env['bernstein_factor']:.3f}, {elapsed:.1f}s",
    )


def test_criterion_02_bony_decomposition_and_drift():
    report, elapsed = timed_suite("bony")
    env = report.environment
    ok = (
        report.passed
        and env["pairs"] == 100
        and env["decomposition_residual_max"] <= 1e-12
        and env["ratio_drift"] <= 3.0
        and report.scales == list(range(4, 10))
        and elapsed < 20.0
    )
    verdict(
        2,
        ok,
        f"exactness {env['decomposition_residual_max']:.2e} over 100 pairs, "
        f"drift {env['ratio_drift']:.2f}, {elapsed:.1f}s",
    )


def test_criterion_03_quadrature_oracle_agreement():
    report, elapsed = timed_suite("paradiff-oracle")
    env = report.environment
    ok = (
        report.passed
        and env["grid"] == 256
        and env["trials"] == 25
        and env["max_relative_error"] <= 1e-8
        and elapsed < 60.0
    )
    verdict(
        3,
        ok,
        f"max relative error {env['max_relative_error']:.2e} over 25 symbols "
        f"on the 256 grid, {elapsed:.1f}s",
    )


def test_criterion_04_composition_defect_order():
    report, elapsed = timed_suite("composition")
    ok = report.passed and report.fitted_slope <= 1.8 and elapsed < 60.0
    verdict(4, ok, f"slope {report.fitted_slope:.4f} <= 1.8, {elapsed:.1f}s")


def test_criterion_05_identity_paracomposition():
    report, elapsed = timed_suite("paracomp-id")
    env = report.environment
    ok = (
        report.passed
        and env["identity_defect_max"] <= 1e-10
        and env["linearity_defect"] <= 1e-12
        and elapsed < 10.0
    )
    verdict(
        5,
        ok,
        f"identity defect {env['identity_defect_max']:.2e}, linearity "
        f"{env['linearity_defect']:.2e}, {elapsed:.1f}s",
    )


def test_criterion_06_linearization_gain():
    report, elapsed = timed_suite("linearization")
    ok = report.passed and report.fitted_slope <= -0.7 and elapsed < 90.0
    verdict(6, ok, f"slope {report.fitted_slope:.4f} <= -0.7, {elapsed:.1f}s")


def test_criterion_07_conjugation_both_symbols():
    report, elapsed = timed_suite("conjugation")
    env = report.environment
    ok = (
        report.passed
        and env["transport_slope"] <= 0.3
        and report.fitted_slope <= 0.8
        and elapsed < 120.0
    )
    verdict(
        7,
        ok,
        f"transport slope {env['transport_slope']:.4f} <= 0.3, dispersive "
        f"slope {report.fitted_slope:.4f} <= 0.8, {elapsed:.1f}s",
    )


def test_criterion_08_reduction_and_flat_floor():
    report, elapsed = timed_suite("reduction")
    env = report.environment
    ok = (
        report.passed
        and report.fitted_slope <= 1.3
        and env["flat_floored"]
        and elapsed < 120.0
    )
    verdict(
        8,
        ok,
        f"slope {report.fitted_slope:.4f} <= 1.3, flat surface floored at "
        f"{env['flat_norm_max']:.2e}, {elapsed:.1f}s",
    )


def test_criterion_09_dispersive_decay(dispersion_run):
    report, elapsed = dispersion_run
    env = report.environment
    ok = (
        report.passed
        and report.ratio <= 3.0
        and abs(env["free"]["fitted_slope"]) <= 0.15
        and abs(env["transport"]["fitted_slope"]) <= 0.15
        and env["free"]["j_values"] == list(range(5, 10))
        and env["transport"]["j_values"] == list(range(5, 10))
        and elapsed < 300.0
    )
    verdict(
        9,
        ok,
        f"ratio {report.ratio:.3f} <= 3, slopes free "
        f"{env['free']['fitted_slope']:+.3f} / transport "
        f"{env['transport']['fitted_slope']:+.3f} within 0.15, {elapsed:.0f}s",
    )


def test_criterion_10_strichartz_gain(strichartz_run):
    report, elapsed = strichartz_run
    env = report.environment
    ok = (
        report.passed
        and abs(env["free"]["fitted_slope"]) <= 0.15
        and abs(env["transport"]["fitted_slope"]) <= 0.15
        and elapsed < 300.0
    )
    verdict(
        10,
        ok,
        f"quartic gain slopes free {env['free']['fitted_slope']:+.3f} / "
        f"transport {env['transport']['fitted_slope']:+.3f} within 0.15, "
        f"{elapsed:.0f}s",
    )


def test_criterion_11_propagator_audits(dispersion_run, strichartz_run):
    lo, hi = RICHARDSON_WINDOW
    audits = []
    for report, _ in (dispersion_run, strichartz_run):
        for fixture in ("free", "transport"):
            audits.extend(report.environment[fixture]["audits"])
    assert audits
    worst_defect = max(a["conservation_defect"] for a in audits)
    ratios = [a["richardson_ratio"] for a in audits if not a["exact"]]
    ok = worst_defect <= CONSERVATION_TOL and all(lo <= r <= hi for r in ratios)
    verdict(
        11,
        ok,
        f"{len(audits)} audited runs, conservation <= {worst_defect:.2e}, "
        f"richardson ratios in [{min(ratios):.2f}, {max(ratios):.2f}]",
    )


def test_criterion_12_parametrix_defect_gain():
    t0 = time.perf_counter()
    report = measure_parametrix_defect()
    elapsed = time.perf_counter() - t0
    floor = report.expected_bound - report.tolerance
    ok = (
        report.passed
        and report.direction == "lower"
        and report.fitted_slope >= floor
        and elapsed < 300.0
    )
    verdict(
        12,
        ok,
        f"defect slope {report.fitted_slope:+.4f} >= {floor:+.4f}, "
        f"{elapsed:.0f}s",
    )
