import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from cbci import Atomic, Quadruplet, StableTailDual, ThorinPair, Window, forward
from cbci.errors import NotErgodicError
from cbci.mechanisms import phi
from cbci.sector import (
    DEFAULT_BASIS,
    bilinear_exp,
    empirical_sector,
    energies_x_x2,
    ggc_moments,
    lower_bound_general,
    lower_bound_moments,
    reversibility_residual,
    sector_of_matrix,
    sector_report,
    upper_bound_c2,
    upper_bound_quad,
    upper_bound_thorin,
)
from cbci.simulate import StationaryLaw, sample_stationary

from conftest import atomic_measures

CIR = Quadruplet(1.0, 1.0)
TWO = Quadruplet(0.5, 2 / 3, Atomic((1 / 12,), (1.5,)))
DUAL = Quadruplet(0.0, 1.0, StableTailDual(0.5, 1.0))
ROOT = math.sqrt(2 / 3)


def quad_of(m, delta=1.0):
    res = forward(ThorinPair(0.0, m))
    return Quadruplet(res.a, res.b, res.M, delta)


class TestBilinear:
    @given(st.floats(0.01, 10), st.floats(0.01, 10))
    def test_cir_symmetric(self, lam, mu):
        assert bilinear_exp(CIR, 1.0, lam, mu).antisymmetric == 0.0

    def test_constant_function(self):
        assert bilinear_exp(TWO, 1.0, 0.0, 2.0).full == 0.0
        assert bilinear_exp(TWO, 1.0, 2.0, 0.0).full == 0.0

    @pytest.mark.parametrize("lam,mu", [(0.5, 1.0), (2.0, 0.3), (1.0, 1.0)])
    def test_dual_stable_shape(self, lam, mu):
        # kappa = 1, alpha = 1/2, delta = 1
        exact = lam * (1 - math.sqrt((lam + 1) / (lam + mu + 1))) * math.exp(-phi(DUAL, lam + mu))
        assert bilinear_exp(DUAL, 1.0, lam, mu).full == pytest.approx(exact, rel=1e-9)

    @pytest.mark.parametrize("lam,mu", [(0.7, 1.9), (2.5, 0.4)])
    def test_integration_by_parts_by_quadrature(self, lam, mu):
        # stationary law Exp(1) * Exp(2); tail density of jumps c kappa exp(-kappa y)
        a, c, k = 0.5, 1 / 12, 1.5

        def density(x):
            return 2 * (math.exp(-x) - math.exp(-2 * x))

        diff = integrate.quad(lambda x: a * x * lam * mu * math.exp(-(lam + mu) * x) * density(x), 0, np.inf)[0]

        def jump(y, x):
            fp = -lam * math.exp(-lam * (x + y))
            return x * density(x) * c * k * math.exp(-k * y) * fp * (math.exp(-mu * (x + y)) - math.exp(-mu * x))

        jumps = integrate.dblquad(jump, 0, np.inf, 0, np.inf, epsabs=1e-13)[0]
        assert bilinear_exp(TWO, 1.0, lam, mu).full == pytest.approx(diff + jumps, rel=1e-8)

    def test_symmetric_part_by_monte_carlo(self):
        lam, mu = 0.8, 1.7
        law = StationaryLaw(ThorinPair(0.0, Atomic((1.0, 1.0), (1.0, 2.0))), 1.0)
        x = sample_stationary(law, 200_000, seed=7)
        c, k = 1 / 12, 1.5

        def n(y):
            return c * k * k * math.exp(-k * y)

        J = integrate.quad(lambda y: n(y) * math.expm1(-lam * y) * math.expm1(-mu * y), 0, np.inf)[0]
        samples = x * np.exp(-(lam + mu) * x) * (0.5 * lam * mu + 0.5 * J)
        est, se = samples.mean(), samples.std(ddof=1) / math.sqrt(len(samples))
        assert abs(est - bilinear_exp(TWO, 1.0, lam, mu).symmetric) < 4 * se

    def test_non_ergodic(self):
        with pytest.raises(NotErgodicError):
            bilinear_exp(Quadruplet(1.0, 0.0), 1.0, 1.0, 1.0)


class TestReversibility:
    def test_cir(self):
        assert reversibility_residual(CIR) == 0.0

    def test_two_atom(self):
        assert reversibility_residual(TWO) > 0
        assert bilinear_exp(TWO, 1.0, 1.0, 2.0).antisymmetric != 0

    def test_dual_stable(self):
        assert reversibility_residual(DUAL) > 1e-6


class TestEmpirical:
    def test_cir(self):
        assert empirical_sector(CIR, 1.0, np.geomspace(0.01, 100, 12)) == 1.0

    def test_single_rate(self):
        assert empirical_sector(TWO, 1.0, [1.3]) == 1.0

    def test_two_atom_range(self):
        assert 1.0 < empirical_sector(TWO, 1.0, DEFAULT_BASIS) <= 1 + ROOT

    def test_matrix_norm(self):
        A = np.array([[1.0, 1.0], [-1.0, 1.0]])
        assert sector_of_matrix(A) == pytest.approx(math.sqrt(2.0), rel=1e-14)

    @given(atomic_measures(min_atoms=2, max_atoms=5), st.integers(2, 6))
    def test_refinement_is_monotone(self, m, k):
        quad = quad_of(m)
        coarse = np.geomspace(0.1, 10, k)
        fine = np.union1d(coarse, np.sqrt(coarse[1:] * coarse[:-1]))
        assert empirical_sector(quad, 1.0, fine) >= empirical_sector(quad, 1.0, coarse) - 1e-10


class TestUpperBounds:
    def test_two_atom_first_bound(self, two_atom_pair):
        a, b = upper_bound_thorin(two_atom_pair)
        assert a == pytest.approx(ROOT, rel=1e-12)
        assert b == pytest.approx(1.0, rel=1e-12)

    def test_degenerate(self):
        assert upper_bound_thorin(ThorinPair(0.0, Atomic((1.0,), (2.0,)))) == (0.0, 0.0)

    def test_window(self):
        _, second = upper_bound_thorin(ThorinPair(0.0, Window(1.0, 2.0)))
        assert second == pytest.approx(1.0, rel=1e-12)

    def test_quadruplet_form(self):
        assert upper_bound_quad(0.5, 2 / 3, Atomic((1 / 12,), (1.5,))) == pytest.approx(ROOT, rel=1e-12)
        assert upper_bound_quad(1.0, 1.0, Atomic()) == 0.0

    @given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.05, 5), st.floats(0.2, 5))
    def test_single_jump_parametrisation(self, a, b, c, k):
        from cbci import backward

        D = (a * k - b - c) ** 2 + 4 * a * c * k
        sq = (math.sqrt(D) - (a * k - b - c)) / (a * k)
        assert upper_bound_quad(a, b, Atomic((c,), (k,))) ** 2 == pytest.approx(sq, rel=1e-9)
        l2 = backward(a, b, Atomic((c,), (k,))).m.x[-1]
        assert sq == pytest.approx(2 * (l2 - k) / k, rel=1e-8)

    def test_c2_route(self, two_atom_pair):
        route = upper_bound_c2(two_atom_pair, 0.5, Atomic((1 / 12,), (1.5,)))
        assert route.grid_sup <= route.cap + 1e-12
        assert route.cap == pytest.approx(0.5, rel=1e-14)
        assert route.bound_c2 == pytest.approx(ROOT, rel=1e-12)


class TestLowerBounds:
    def test_ggc_moments(self):
        assert ggc_moments(Atomic((1.0,), (1.0,))) == pytest.approx((1, 2, 6))
        assert ggc_moments(Atomic((2.0,), (1.0,))) == pytest.approx((2, 6, 24))
        assert ggc_moments(Atomic((1.0, 1.0), (1.0, 2.0)))[0] == 1.5

    def test_degenerate(self):
        assert lower_bound_moments(Atomic((1.0,), (3.0,))) == 1.0

    def test_two_atom_value(self, two_atom):
        n1, n2, n3, n4 = 1.5, 1.25, 1.125, 17 / 16
        den = 2 * n1 * n2**2 * n3 + 4 * n1**2 * n2**3 + 12 * n1**2 * n2 * n4 - 9 * n1**2 * n3**2 - n2**4
        assert (n1 * n3 - n2**2) ** 2 == pytest.approx(1 / 64)
        assert lower_bound_moments(two_atom) == pytest.approx(math.sqrt(1 + (1 / 64) / den), rel=1e-14)

    def test_symmetric_pair_uninformative(self):
        assert lower_bound_general(1.0, 2.0, 0.5, 0.5) == 1.0

    def test_degenerate_pair_unbounded(self):
        # E(f,f) E(g,g) equals the squared symmetric part but not E(f,g) times it
        assert math.isinf(lower_bound_general(1.0, 1.0, 1.5, 0.5))

    @given(atomic_measures(min_atoms=2, max_atoms=6))
    def test_two_routes_agree(self, m):
        quad = quad_of(m)
        E_ff, E_gg, E_fg, E_gf = energies_x_x2(quad, ggc_moments(m))
        assert lower_bound_general(E_gg, E_ff, E_gf, E_fg) == pytest.approx(lower_bound_moments(m), rel=1e-10)

    @given(atomic_measures(min_atoms=2, max_atoms=5), st.floats(0.1, 10))
    def test_location_scaling_invariance(self, m, s):
        scaled = Atomic(m.weights, tuple(s * x for x in m.locations))
        assert lower_bound_moments(scaled) == pytest.approx(lower_bound_moments(m), rel=1e-9)


class TestSandwich:
    @given(atomic_measures(min_atoms=1, max_atoms=6), st.sampled_from([0.5, 1.0, 3.0]))
    def test_report_has_no_violations(self, m, delta):
        rep = sector_report(ThorinPair(0.0, m), delta)
        assert rep.violations() == []
        assert rep.lower <= rep.empirical + 1e-12 <= rep.upper + 1e-6

    def test_bounds_collapse_only_without_jumps(self, two_atom_pair):
        assert sector_report(CIR).upper == 1.0
        assert sector_report(two_atom_pair).upper > 1.0

    def test_window_upper(self):
        rep = sector_report(ThorinPair(0.0, Window(1.0, 2.0)))
        assert rep.upper <= 2.0 + 1e-6 and rep.violations() == []

    def test_json_keys(self, two_atom_pair):
        doc = sector_report(two_atom_pair, basis=DEFAULT_BASIS).to_json()
        assert doc["upperThorinA"] == pytest.approx(1 + ROOT, rel=1e-12)
        assert set(doc) >= {"lowerMoments", "lowerGeneral", "upperQuad", "upperC2", "empirical", "matrices"}
