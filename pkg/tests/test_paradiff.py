import numpy as np
import pytest

from paraspect.core import (
    AdmissibilityError,
    FrequencyProfile,
    GridFunction,
    InputError,
    inner,
    lp_norm,
)
from paraspect.dyadic import DyadicSystem, build_cutoff
from paraspect.paradiff import (
    AdmissibleCutoffPair,
    SeparableSymbol,
    adjoint_symbol,
    apply_T,
    apply_Tdot,
    audit_paraproduct_support,
    bony_remainder,
    compose_symbols,
    conjugate_profile,
    function_symbol,
    measure_remainder_regularity,
    multiplier_symbol,
    paraproduct,
    quadrature_oracle,
    remainder_gap,
    truncated_remainder,
    unit_wave,
    verify_composition,
)

PERIOD = 2.0 * np.pi


def make_system(size=1, n_points=256):
    return DyadicSystem(build_cutoff(size), PERIOD, n_points)


def random_gf(rng, n_points=256):
    vals = rng.standard_normal(n_points) + 1j * rng.standard_normal(n_points)
    return GridFunction(PERIOD, vals)


def smooth_gf(n_points, *mode_amps):
    x = np.arange(n_points) * (PERIOD / n_points)
    vals = np.zeros(n_points, dtype=np.complex128)
    for mode, amp in mode_amps:
        vals += amp * np.exp(1j * mode * x)
    return GridFunction(PERIOD, vals)


def ones_gf(n_points=256):
    return GridFunction(PERIOD, np.ones(n_points, dtype=np.complex128))


class TestSeparableSymbol:
    def test_rejects_empty_terms(self):
        with pytest.raises(InputError):
            SeparableSymbol([], 0.0, 1.0)

    def test_rejects_order_homogeneity_mismatch(self):
        c = ones_gf()
        with pytest.raises(InputError):
            SeparableSymbol([(c, FrequencyProfile.power(1.5))], 1.0, 1.0)

    def test_rejects_mixed_grids(self):
        with pytest.raises(InputError):
            SeparableSymbol(
                [(ones_gf(256), FrequencyProfile.one()), (ones_gf(128), FrequencyProfile.one())],
                0.0,
                1.0,
            )

    def test_order_tracks_top_homogeneity(self):
        c = ones_gf()
        a = SeparableSymbol(
            [(c, FrequencyProfile.power(1.5)), (c, FrequencyProfile.i_xi())], 1.5, 2.0
        )
        assert a.order_m == 1.5

    def test_seminorm_reproducible(self):
        system = make_system()
        rng = np.random.default_rng(5)
        a = SeparableSymbol(
            [(random_gf(rng), FrequencyProfile.power(1.5))], 1.5, 0.5
        )
        first = a.seminorm(1, system)
        assert np.isfinite(first) and first > 0
        assert a.seminorm(1, system) == first

    def test_seminorm_depth_needs_derivative_chain(self):
        system = make_system()
        bare = FrequencyProfile(lambda xi: np.abs(xi) ** 1.5, homogeneity=1.5)
        a = SeparableSymbol([(ones_gf(), bare)], 1.5, 0.5)
        assert np.isfinite(a.seminorm(0, system))
        with pytest.raises(InputError):
            a.seminorm(1, system)

    def test_conj_profile_chain(self):
        prof = conjugate_profile(FrequencyProfile.i_xi())
        assert prof(2.0) == pytest.approx(-2j)
        assert prof.derivative()(3.0) == pytest.approx(-1j)


class TestAdmissibleCutoffPair:
    def test_offset_must_exceed_size(self):
        system = make_system(size=2)
        with pytest.raises(AdmissibilityError):
            AdmissibleCutoffPair(system, 2)

    def test_offset_must_be_integer(self):
        with pytest.raises(InputError):
            AdmissibleCutoffPair(make_system(), 6.5)

    def test_tight_offset_fails_support_check(self):
        system = make_system(size=0)
        with pytest.raises(AdmissibilityError):
            AdmissibleCutoffPair(system, 1)

    @pytest.mark.parametrize("size", [0, 1, 2, 3, 4])
    def test_default_offset_admissible(self, size):
        system = make_system(size=size)
        pair = AdmissibleCutoffPair(system)
        assert pair.N == size + 6
        assert 0.0 < pair.epsilon1 < pair.epsilon2 < 1.0

    def test_psi_gate_values(self):
        pair = AdmissibleCutoffPair(make_system(size=1))
        inner_edge = 2.0 ** (-2)
        assert pair.psi_values(0.0) == 1.0
        assert pair.psi_values(inner_edge) == 0.0
        assert pair.psi_values(2.0 * inner_edge) == 1.0
        mid = pair.psi_values(1.5 * inner_edge)
        assert 0.0 < mid < 1.0

    def test_chi_support_edges(self):
        pair = AdmissibleCutoffPair(make_system(size=1))
        xi = 32.0
        assert pair.chi_values(0.9 * pair.epsilon1 * (1 + xi), xi) == pytest.approx(1.0)
        assert pair.chi_values(1.1 * pair.epsilon2 * (1 + xi), xi) == pytest.approx(0.0, abs=1e-14)


class TestApplyT:
    def test_constant_symbol_is_identity(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        a = function_symbol(ones_gf(), regularity_rho=2.0)
        rng = np.random.default_rng(7)
        for _ in range(5):
            u = random_gf(rng)
            assert lp_norm(apply_T(a, u, system, pair) - u, np.inf) <= 1e-12

    def test_truncated_constant_drops_lowest_block(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        a = function_symbol(ones_gf(), regularity_rho=2.0)
        rng = np.random.default_rng(8)
        u = random_gf(rng)
        expect = u - system.block(u, 0)
        assert lp_norm(apply_Tdot(a, u, system, pair) - expect, np.inf) <= 1e-12

    def test_banded_coefficient_on_wave_is_exact_product(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 4096)
        pair = AdmissibleCutoffPair(system)  # N = 6
        # c band-limited below 2^(j-N-2) = 4 for j = 10
        c = smooth_gf(4096, (0, 1.0), (1, 0.15), (-1, 0.15), (3, 0.1j))
        a = SeparableSymbol([(c, FrequencyProfile.i_xi())], 1.0, 2.0)
        u = smooth_gf(4096, (2**10, 1.0))
        expect = u.with_samples(c.samples * (1j * 2**10) * u.samples)
        got = apply_T(a, u, system, pair)
        scale = lp_norm(expect, np.inf)
        assert lp_norm(got - expect, np.inf) <= 1e-10 * scale

    def test_single_block_truncated_form(self):
        system = make_system(size=1, n_points=2048)
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(9)
        c = random_gf(rng, 2048)
        m = FrequencyProfile.power(1.5)
        a = SeparableSymbol([(c, m)], 1.5, 1.0)
        # u supported where the p = 8 window is exactly one, so the
        # overlapping neighbour blocks vanish on it
        raw = random_gf(rng, 2048)
        spec = raw.spectrum.copy()
        keep = (np.abs(raw.freqs) >= 140.0) & (np.abs(raw.freqs) <= 180.0)
        spec[~keep] = 0.0
        u = GridFunction.from_spectrum(PERIOD, spec)
        expect = system.lowpass(c, 8 - pair.N) * GridFunction.from_spectrum(
            PERIOD, m(u.freqs) * u.spectrum
        )
        got = apply_Tdot(a, u, system, pair)
        # neighbour blocks of u are empty, so only p = 8 contributes
        assert lp_norm(got - expect, np.inf) <= 1e-10 * lp_norm(expect, np.inf)

    def test_low_tail_is_spectrally_confined(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(10)
        a = SeparableSymbol(
            [(random_gf(rng), FrequencyProfile.power(1.5)), (random_gf(rng), FrequencyProfile.i_xi())],
            1.5,
            1.0,
        )
        u = random_gf(rng)
        diff = apply_T(a, u, system, pair) - apply_Tdot(a, u, system, pair)
        outside = np.abs(u.freqs) > 2.0 ** (system.N0 + 1)
        leak = np.max(np.abs(diff.spectrum[outside]))
        assert leak <= 1e-12 * np.max(np.abs(u.spectrum))

    def test_negative_degree_needs_zero_value(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(11)
        u = random_gf(rng)
        bad = SeparableSymbol([(ones_gf(), FrequencyProfile.power(-0.5))], -0.5, 1.0)
        with pytest.raises(InputError):
            apply_T(bad, u, system, pair)
        declared = FrequencyProfile(
            lambda xi: np.abs(xi) ** -0.5, homogeneity=-0.5, zero_value=0.0
        )
        ok = SeparableSymbol([(ones_gf(), declared)], -0.5, 1.0)
        assert np.isfinite(lp_norm(apply_T(ok, u, system, pair), 2))

    def test_grid_mismatch_rejected(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        a = function_symbol(ones_gf(128), regularity_rho=1.0)
        with pytest.raises(InputError):
            apply_T(a, random_gf(np.random.default_rng(0), 256), system, pair)


class TestBonyDecomposition:
    def test_exact_identity(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(12)
        for _ in range(20):
            a, u = random_gf(rng), random_gf(rng)
            total = (
                paraproduct(a, u, system, pair)
                + paraproduct(u, a, system, pair)
                + bony_remainder(a, u, system, pair)
            )
            assert lp_norm(total - a * u, np.inf) <= 1e-12

    def test_constant_coefficient_blocks(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(13)
        u = random_gf(rng)
        one = ones_gf()
        tp = paraproduct(one, u, system, pair)
        expect = np.zeros(u.n, dtype=np.complex128)
        for p in range(pair.N, system.p_max + 1):
            expect += system.block(u, p).samples
        assert np.max(np.abs(tp.samples - expect)) <= 1e-13
        total = tp + paraproduct(u, one, system, pair) + bony_remainder(one, u, system, pair)
        assert lp_norm(total - u, np.inf) <= 1e-12

    @pytest.mark.parametrize("size,offset", [(0, 6), (1, 7), (1, 9), (2, 8)])
    def test_remainder_gap_identity(self, size, offset):
        system = make_system(size=size)
        pair = AdmissibleCutoffPair(system, offset)
        rng = np.random.default_rng(14 + size + offset)
        for _ in range(5):
            v, w = random_gf(rng), random_gf(rng)
            lhs = bony_remainder(v, w, system, pair) - truncated_remainder(v, w, system, pair)
            gap = remainder_gap(v, w, system, pair)
            assert lp_norm(lhs - gap, np.inf) <= 1e-13

    def test_paralinearization_of_square(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(15)
        u = random_gf(rng)
        lhs = u * u - paraproduct(u, u, system, pair) * 2.0
        rhs = bony_remainder(u, u, system, pair)
        assert lp_norm(lhs - rhs, np.inf) <= 1e-12

    def test_paraproduct_summands_live_in_annuli(self):
        system = make_system(size=1, n_points=2048)
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(16)
        leak = audit_paraproduct_support(random_gf(rng, 2048), random_gf(rng, 2048), system, pair)
        assert leak <= 1e-13

    def test_remainder_regularity_ratios_bounded(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 2048)
        pair = AdmissibleCutoffPair(system, 2)
        report = measure_remainder_regularity(system, pair)
        assert report.passed
        assert report.environment["ratio_drift"] <= 3.0
        assert report.suite_id == "bony-regularity"


class TestSymbolicCalculus:
    def test_constant_coefficient_composition_is_exact(self):
        system = make_system(size=1, n_points=512)
        pair = AdmissibleCutoffPair(system)
        like = ones_gf(512)
        a = multiplier_symbol(FrequencyProfile.power(1.5), like, regularity_rho=1.0)
        b = multiplier_symbol(FrequencyProfile.i_xi(), like, regularity_rho=1.0)
        sharp = compose_symbols(a, b)
        assert len(sharp.terms) == 1
        assert sharp.order_m == 2.5
        assert sharp.terms[0][1](2.0) == pytest.approx(1j * 2.0 * 2.0**1.5)
        rng = np.random.default_rng(17)
        u = random_gf(rng, 512)
        lhs = apply_T(a, apply_T(b, u, system, pair), system, pair)
        rhs = apply_T(sharp, u, system, pair)
        assert lp_norm(lhs - rhs, 2) <= 1e-12 * lp_norm(rhs, 2)

    def test_first_order_term_appears_above_rho_one(self):
        n_points = 512
        x = np.arange(n_points) * (PERIOD / n_points)
        c = GridFunction(PERIOD, 1.0 + 0.5 * np.cos(x))
        a = SeparableSymbol([(c, FrequencyProfile.power(1.5))], 1.5, 2.0)
        b = SeparableSymbol([(c, FrequencyProfile.i_xi())], 1.0, 2.0)
        sharp = compose_symbols(a, b)
        assert len(sharp.terms) == 2
        homs = sorted(m.homogeneity for _, m in sharp.terms)
        assert homs == pytest.approx([1.5, 2.5])

    def test_composition_rho_gates(self):
        like = ones_gf(256)
        mk = lambda rho: multiplier_symbol(FrequencyProfile.power(1.5), like, regularity_rho=rho)
        with pytest.raises(InputError):
            compose_symbols(mk(0.0), mk(1.0))
        with pytest.raises(InputError):
            compose_symbols(mk(2.5), mk(2.5))

    def test_missing_profile_derivative_rejected_above_rho_one(self):
        like = ones_gf(256)
        bare = FrequencyProfile(lambda xi: np.abs(xi) ** 1.5, homogeneity=1.5)
        a = SeparableSymbol([(like, bare)], 1.5, 2.0)
        b = multiplier_symbol(FrequencyProfile.i_xi(), like, regularity_rho=2.0)
        with pytest.raises(InputError):
            compose_symbols(a, b)
        # at rho = 1 only the zeroth-order term is kept, so no derivative needed
        a1 = SeparableSymbol([(like, bare)], 1.5, 1.0)
        b1 = multiplier_symbol(FrequencyProfile.i_xi(), like, regularity_rho=1.0)
        assert len(compose_symbols(a1, b1).terms) == 1

    def test_real_multiplier_self_adjoint(self):
        system = make_system()
        pair = AdmissibleCutoffPair(system)
        a = multiplier_symbol(FrequencyProfile.power(1.5), ones_gf(), regularity_rho=2.0)
        adj = adjoint_symbol(a)
        rng = np.random.default_rng(18)
        for _ in range(5):
            u, v = random_gf(rng), random_gf(rng)
            lhs = inner(apply_T(a, u, system, pair), v)
            rhs = inner(u, apply_T(a, v, system, pair))
            scale = lp_norm(u, 2) * lp_norm(v, 2)
            assert abs(lhs - rhs) <= 1e-12 * scale
            direct = apply_T(adj, u, system, pair)
            assert lp_norm(direct - apply_T(a, u, system, pair), 2) <= 1e-12 * scale


class TestVerifyComposition:
    @staticmethod
    def fixture_symbols(n_points=4096):
        x = np.arange(n_points) * (PERIOD / n_points)
        gamma_coeff = GridFunction(PERIOD, (1.0 + np.sin(x) ** 2) ** (-0.75))
        transport = GridFunction(PERIOD, 1.0 + 0.5 * np.cos(x) + 0.3 * np.sin(2 * x))
        a = SeparableSymbol([(gamma_coeff, FrequencyProfile.power(1.5))], 1.5, 1.0)
        b = SeparableSymbol([(transport, FrequencyProfile.i_xi())], 1.0, 1.0)
        return a, b

    def test_fixture_slope_within_bound(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 4096)
        pair = AdmissibleCutoffPair(system, 2)
        a, b = self.fixture_symbols()
        report = verify_composition(a, b, system, pair)
        assert report.expected_bound == pytest.approx(1.5)
        assert report.fitted_slope <= 1.8
        assert report.passed

    def test_swapped_order_same_bound(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 4096)
        pair = AdmissibleCutoffPair(system, 2)
        a, b = self.fixture_symbols()
        report = verify_composition(b, a, system, pair, suite_id="composition-swapped")
        assert report.fitted_slope <= 1.8
        assert report.passed

    def test_constant_case_floors(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 4096)
        pair = AdmissibleCutoffPair(system, 2)
        like = ones_gf(4096)
        a = multiplier_symbol(FrequencyProfile.power(1.5), like, regularity_rho=1.0)
        b = multiplier_symbol(FrequencyProfile.i_xi(), like, regularity_rho=1.0)
        report = verify_composition(a, b, system, pair)
        assert report.environment["all_points_floored"]
        assert report.passed

    def test_too_few_scales_refused(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 4096)
        pair = AdmissibleCutoffPair(system, 2)
        a, b = self.fixture_symbols()
        with pytest.raises(InputError):
            verify_composition(a, b, system, pair, j_range=[4, 5, 6])

    def test_low_regularity_refused(self):
        system = DyadicSystem(build_cutoff(0), PERIOD, 4096)
        pair = AdmissibleCutoffPair(system, 2)
        a, b = self.fixture_symbols()
        a.regularity_rho = 0.5
        with pytest.raises(InputError):
            verify_composition(a, b, system, pair)

    def test_scale_beyond_grid_refused(self):
        system = make_system(size=0, n_points=256)
        pair = AdmissibleCutoffPair(system, 2)
        a, b = self.fixture_symbols(256)
        with pytest.raises(InputError):
            verify_composition(a, b, system, pair, j_range=range(5, 9))


class TestQuadratureOracle:
    @pytest.mark.parametrize("size,n_points", [(0, 128), (0, 256), (1, 256), (1, 512)])
    def test_matches_block_implementation(self, size, n_points):
        system = DyadicSystem(build_cutoff(size), PERIOD, n_points)
        pair = AdmissibleCutoffPair(system)
        rng = np.random.default_rng(100 + size + n_points)
        x = np.arange(n_points) * (PERIOD / n_points)
        for _ in range(3):
            c1 = GridFunction(PERIOD, 1.0 + 0.5 * np.cos(x + rng.uniform(0, PERIOD)))
            c2 = random_gf(rng, n_points)
            a = SeparableSymbol(
                [(c1, FrequencyProfile.power(1.5)), (c2, FrequencyProfile.i_xi())],
                1.5,
                1.0,
            )
            u = random_gf(rng, n_points)
            fast = apply_T(a, u, system, pair)
            slow = quadrature_oracle(a, u, system, pair)
            assert lp_norm(fast - slow, 2) <= 1e-8 * lp_norm(slow, 2)

    def test_large_grid_refused(self):
        system = make_system(size=0, n_points=1024)
        pair = AdmissibleCutoffPair(system)
        a = function_symbol(ones_gf(1024), regularity_rho=1.0)
        with pytest.raises(InputError):
            quadrature_oracle(a, random_gf(np.random.default_rng(1), 1024), system, pair)


class TestUnitWave:
    def test_unit_norm_and_frequency(self):
        system = make_system(size=0, n_points=512)
        u = unit_wave(system, 5)
        assert lp_norm(u, 2) == pytest.approx(1.0)
        k = np.argmax(np.abs(u.spectrum))
        assert u.freqs[k] == 32.0
