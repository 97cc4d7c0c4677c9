import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbci import Atomic, Quadruplet, StableTailDual, ThorinPair
from cbci.errors import DomainError
from cbci.measures import laplace_exponent, levy_density
from cbci.mechanisms import (
    branching_R,
    is_ergodic,
    jump_density,
    levy_series_a0,
    phi,
    psi,
    psi_path,
    psi_table,
    stationary_laplace,
    support_infimum,
    transient_laplace,
)

from conftest import atomic_measures

CIR = Quadruplet(1.0, 1.0)
DUAL = Quadruplet(0.0, 1.0, StableTailDual(0.5, 1.0))


def riccati(a, b, t, lam):
    return b * lam * math.exp(-b * t) / (b + a * lam * -math.expm1(-b * t))


@st.composite
def quadruplets(draw):
    a = draw(st.floats(0.0, 3.0))
    b = draw(st.floats(0.05, 3.0))
    M = draw(st.one_of(st.just(Atomic()), atomic_measures(max_atoms=3, lo=0.2, hi=5.0)))
    return Quadruplet(a, b, M, draw(st.floats(0.2, 3.0)))


class TestQuadruplet:
    def test_trivial_rejected(self):
        with pytest.raises(DomainError):
            Quadruplet(0.0, 0.0)

    def test_nonpositive_delta_rejected(self):
        with pytest.raises(DomainError):
            Quadruplet(1.0, 1.0, delta=0.0)

    def test_jump_summaries(self):
        q = Quadruplet(0.0, 1.0, Atomic((2.0,), (3.0,)))
        assert q.c == 2.0 and q.rho == 6.0


class TestBranching:
    def test_cir(self):
        assert branching_R(CIR, 2.0) == -6.0

    def test_dual_stable(self):
        for lam in (0.1, 1.0, 5.0):
            assert branching_R(DUAL, lam) == pytest.approx(-lam * math.sqrt(lam + 1.0), rel=1e-10)

    @given(quadruplets())
    def test_zero_at_origin(self, quad):
        assert branching_R(quad, 0.0) == 0.0

    def test_blow_up_iff_diffusion_or_infinite_jump_mean(self):
        lams = np.geomspace(1e2, 1e8, 7)
        bounded = Quadruplet(0.0, 1.0, Atomic((1.0,), (2.0,)))
        ratios = [-branching_R(bounded, lam) / lam for lam in lams]
        assert max(ratios) <= bounded.b + bounded.c + 1e-12
        for quad in (Quadruplet(0.5, 1.0, Atomic((1.0,), (2.0,))), DUAL):
            ratios = [-branching_R(quad, lam) / lam for lam in lams]
            assert ratios[-1] > 100 * ratios[0] and np.all(np.diff(ratios) > 0)


class TestJumpDensity:
    def test_at_zero(self):
        quad = Quadruplet(0.5, 2 / 3, Atomic((1 / 12,), (1.5,)))
        assert jump_density(quad, 0.0)[0] == pytest.approx(3 / 16, rel=1e-14)

    def test_no_jumps(self):
        assert jump_density(CIR, 0.7) == (0.0, 0.0)

    def test_exponential(self):
        c, k, y = 0.3, 2.0, 0.8
        n, tail = jump_density(Quadruplet(0.0, 1.0, Atomic((c,), (k,))), y)
        assert n == pytest.approx(c * k * k * math.exp(-k * y), rel=1e-14)
        assert tail == pytest.approx(c * k * math.exp(-k * y), rel=1e-14)


class TestStationaryExponent:
    def test_gamma(self):
        for lam in (0.1, 1.0, 10.0):
            assert phi(CIR, lam) == pytest.approx(math.log1p(lam), rel=1e-14)

    def test_linear_slope_without_diffusion(self):
        quad = Quadruplet(0.0, 1.0, Atomic((1.0,), (2.0,)))
        lam = 1e6
        slope = (phi(quad, 2 * lam) - phi(quad, lam)) / lam
        assert slope == pytest.approx(1 / (quad.b + quad.c), rel=1e-5)

    def test_dual_stable_matches_stable_tail_exponent(self):
        for lam in (0.5, 3.0, 20.0):
            assert phi(DUAL, lam) == pytest.approx(2 * (math.sqrt(lam + 1) - 1), rel=1e-9)

    @given(quadruplets(), st.floats(0.05, 20.0))
    def test_derivative_route(self, quad, lam):
        h = 1e-4 * lam
        fd = (phi(quad, lam + h) - phi(quad, lam - h)) / (2 * h)
        jump = lam * quad.M.resolvent(lam) if not quad.M.is_zero else 0.0
        assert fd == pytest.approx(1 / (quad.a * lam + quad.b + jump), rel=1e-7)

    def test_ergodicity(self):
        assert is_ergodic(CIR)
        assert not is_ergodic(Quadruplet(1.0, 0.0, Atomic((1.0,), (1.0,))))
        assert is_ergodic(Quadruplet(0.0, 0.0, StableTailDual(0.5, 0.0)))
        assert math.isinf(phi(Quadruplet(1.0, 0.0), 1.0))


class TestPsi:
    def test_linear(self):
        quad = Quadruplet(0.0, 2.0)
        assert psi(quad, 0.7, 1.5).psi == pytest.approx(1.5 * math.exp(-1.4), rel=1e-9)

    def test_cir_value(self):
        assert psi(CIR, 1.0, 1.0).psi == pytest.approx(math.exp(-1) / (2 - math.exp(-1)), rel=1e-9)

    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.3)])
    def test_riccati_grid(self, a, b):
        quad = Quadruplet(a, b)
        for lam in np.linspace(0.1, 5.0, 10):
            for sol in psi_path(quad, np.linspace(0.1, 5.0, 10), lam):
                assert sol.psi == pytest.approx(riccati(a, b, sol.t, lam), rel=1e-8, abs=1e-14)

    @given(quadruplets(), st.floats(0.1, 10.0))
    def test_bounded_decreasing_and_self_consistent(self, quad, lam):
        sols = psi_path(quad, np.linspace(0.05, 3.0, 12), lam)
        vals = np.array([s.psi for s in sols])
        assert np.all(vals <= lam) and np.all(np.diff(vals) < 0)
        assert max(s.residual for s in sols) < 1e-8

    @given(quadruplets(), st.floats(0.1, 3.0), st.floats(0.2, 5.0))
    def test_lambda_derivative_in_unit_interval(self, quad, t, lam):
        h = 1e-4 * lam
        d = (psi(quad, t, lam + h).psi - psi(quad, t, lam - h).psi) / (2 * h)
        assert 0 < d <= 1 + 1e-6

    def test_table_columns(self):
        text = psi_table(CIR, [0.5, 1.0], [1.0])
        assert text.splitlines()[0] == "t,lambda,value,residual"
        assert len(text.splitlines()) == 3


class TestTransient:
    def test_time_zero(self):
        assert transient_laplace(CIR, 0.0, 0.7, 2.0) == math.exp(-1.4)

    def test_long_time_limit(self):
        assert transient_laplace(CIR, 60.0, 1.3, 0.0) == pytest.approx(stationary_laplace(CIR, 1.3), rel=1e-9)

    def test_linear_closed_form(self):
        quad = Quadruplet(0.0, 1.0)
        t, lam, x = 0.8, 1.7, 2.5
        e = math.exp(-t)
        assert transient_laplace(quad, t, lam, x) == pytest.approx(math.exp(-x * lam * e - lam * (1 - e)), rel=1e-9)

    @given(quadruplets(), st.floats(0.1, 3.0))
    def test_monotone_in_lambda_and_x(self, quad, t):
        lams = np.linspace(0.2, 4.0, 6)
        by_lam = [transient_laplace(quad, t, lam, 1.0) for lam in lams]
        by_x = [transient_laplace(quad, t, 1.0, x) for x in np.linspace(0.0, 4.0, 6)]
        assert np.all(np.diff(by_lam) < 0) and np.all(np.diff(by_x) < 0)


class TestSupportInfimum:
    def test_diffusion_gives_zero(self):
        assert support_infimum(CIR, 1.0, 3.0) == 0.0

    def test_limits(self):
        quad = Quadruplet(0.0, 0.5, Atomic((0.5,), (1.0,)))
        assert support_infimum(quad, math.inf, 0.0) == pytest.approx(1.0)
        assert support_infimum(quad, 1e-12, 5.0) == pytest.approx(5.0, rel=1e-9)


class TestLevySeries:
    def test_converges_to_gamma_levy_density(self):
        quad = Quadruplet(0.0, 1.0, Atomic((1.0,), (2.0,)))
        target = ThorinPair(0.0, Atomic((0.5,), (1.0,)))
        for y in (0.3, 1.0, 2.5):
            assert levy_series_a0(quad, y, 60) == pytest.approx(levy_density(target, y), rel=1e-10)

    def test_first_term(self):
        quad = Quadruplet(0.0, 1.0, Atomic((1.0,), (2.0,)))
        y = 0.6
        tail = jump_density(quad, y)[1]
        assert levy_series_a0(quad, y, 1) == pytest.approx(tail / (4 * y), rel=1e-14)

    def test_against_stationary_exponent(self):
        quad = Quadruplet(0.0, 0.4, Atomic((0.3, 0.2), (1.0, 3.0)))
        from scipy.integrate import quad as integral

        lam = 1.5
        body = integral(lambda y: -math.expm1(-lam * y) * levy_series_a0(quad, y, 40), 0, 60, limit=200)[0]
        q = 1 / (quad.b + quad.c)
        assert q * lam + body == pytest.approx(phi(quad, lam), rel=1e-7)

    def test_gamma_exponent_oracle(self):
        p = ThorinPair(0.0, Atomic((0.5,), (1.0,)))
        assert laplace_exponent(p, 2.0) == pytest.approx(0.5 * math.log(3.0), rel=1e-12)
