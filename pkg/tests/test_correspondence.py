import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbci import Atomic, FreePoissonScaled, StableTail, StableTailDual, ThorinPair, Window, backward, forward
from cbci.correspondence import identity_residual, m_moments_of_M, stieltjes_invert, support_bracket
from cbci.errors import DomainError, NotErgodicError

from conftest import atomic_measures


def interlaced(m, M):
    pts = sorted([(x, 0) for x in m.x] + [(x, 1) for x in M.x])
    return all(k1 != k2 for (_, k1), (_, k2) in zip(pts, pts[1:]))


class TestForward:
    def test_two_atoms(self, two_atom_pair):
        res = forward(two_atom_pair)
        assert res.a == pytest.approx(0.5, abs=1e-15)
        assert res.b == pytest.approx(2 / 3, abs=1e-15)
        (c, k), = res.M.atoms
        assert k == pytest.approx(1.5, abs=1e-14) and c == pytest.approx(1 / 12, abs=1e-14)
        assert res.identity_residual < 1e-14

    @given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10))
    def test_two_atom_closed_form(self, g1, g2, l1, l2):
        if abs(l1 - l2) < 1e-3:
            return
        res = forward(ThorinPair(0.0, Atomic.from_pairs([(g1, l1), (g2, l2)])))
        kappa = (l2 * g1 + l1 * g2) / (g1 + g2)
        c = g1 * g2 * (l1 - l2) ** 2 / ((g1 + g2) ** 2 * (l2 * g1 + l1 * g2))
        (cc, kk), = res.M.atoms
        assert kk == pytest.approx(kappa, abs=1e-12) and cc == pytest.approx(c, abs=1e-12)

    def test_single_atom_is_cir(self):
        res = forward(ThorinPair(0.0, Atomic((2.0,), (3.0,))))
        assert (res.a, res.b) == (0.5, 1.5)
        assert res.M.is_zero and res.details["note"] == "CIR"

    def test_stable_tail(self):
        res = forward(ThorinPair(0.0, StableTail(0.5, 1.0)))
        assert res.a == 0.0 and res.b == pytest.approx(1.0, rel=1e-10)
        x = np.array([1.5, 3.0, 10.0])
        assert res.M.density(x) == pytest.approx(np.sqrt(x - 1) / (math.pi * x), rel=1e-12)

    def test_free_poisson_fixed_point(self):
        m = FreePoissonScaled(1.0, 1.0, 2.0)
        res = forward(ThorinPair(0.0, m))
        x = np.linspace(0.25, 5.5, 12)
        assert res.M.density(x) == pytest.approx(m.density(x), abs=1e-4)

    def test_window_inversion(self):
        res = forward(ThorinPair(0.0, Window(1.0, 2.0)))
        assert res.method == "inversion" and res.ok
        assert res.a == 1.0 and res.b == pytest.approx(1 / math.log(2.0), rel=1e-12)

    @given(atomic_measures(max_atoms=8), st.one_of(st.just(0.0), st.floats(0.1, 2.0)))
    def test_structure(self, m, q):
        res = forward(ThorinPair(q, m))
        assert res.identity_residual < 1e-10
        if q == 0:
            assert res.a * m.moment(0.0) == pytest.approx(1.0, rel=1e-12)
        else:
            assert res.a == 0.0
        assert res.b * (q + m.moment(-1.0)) == pytest.approx(1.0, rel=1e-12)
        if not res.M.is_zero:
            assert interlaced(m, res.M)
            if q > 0:
                assert res.M.x[-1] <= (m.x[-1] + m.moment(0.0) / q) * (1 + 1e-14)


class TestBackward:
    def test_single_jump_atom(self):
        res = backward(0.0, 1.0, Atomic((1.0,), (2.0,)))
        assert res.q == pytest.approx(0.5, abs=1e-14)
        (g, x), = res.m.atoms
        assert g == pytest.approx(0.5, abs=1e-14) and x == pytest.approx(1.0, abs=1e-14)

    def test_inverts_two_atom_example(self):
        res = backward(0.5, 2 / 3, Atomic((1 / 12,), (1.5,)))
        assert res.q == 0.0
        assert res.m.x == pytest.approx([1.0, 2.0], abs=1e-12)
        assert res.m.w == pytest.approx([1.0, 1.0], abs=1e-12)

    @pytest.mark.parametrize("a,b", [(1.0, 0.5), (2.0, 1.0), (0.5, 0.2)])
    def test_window_pole_and_density(self, a, b):
        res = backward(a, b, Window(0.0, 1.0))
        mass, x0 = res.details["atoms"][0]
        assert abs(a * x0 - b + x0 * math.log1p(-1 / x0)) < 1e-10
        assert b / a < x0 < 1 + (b + 1) / a
        assert mass == pytest.approx(1 / (b / x0 + 1 / (x0 - 1)), rel=1e-8)
        x = np.linspace(0.05, 0.95, 10)
        exact = 1 / x / ((a - b / x - np.log(x / (1 - x))) ** 2 + math.pi**2)
        dens = np.array([res.m.density(v) for v in x])
        assert dens == pytest.approx(exact, rel=1e-4)

    def test_non_ergodic_rejected(self):
        with pytest.raises(NotErgodicError):
            backward(1.0, 0.0, Atomic((1.0,), (1.0,)))

    @given(atomic_measures(max_atoms=6), st.one_of(st.just(0.0), st.floats(0.01, 5.0)), st.floats(0.1, 5.0))
    def test_round_trip(self, M, a, b):
        bk = backward(a, b, M)
        assert interlaced(bk.m, M)
        f = forward(bk.pair)
        assert f.a == pytest.approx(a, abs=1e-10) and f.b == pytest.approx(b, abs=1e-10)
        assert f.M.x == pytest.approx(M.x, abs=1e-10)
        assert f.M.w == pytest.approx(M.w, abs=1e-10)

    @given(atomic_measures(min_atoms=2, max_atoms=6), st.one_of(st.just(0.0), st.floats(0.1, 2.0)))
    def test_round_trip_from_thorin_side(self, m, q):
        f = forward(ThorinPair(q, m))
        bk = backward(f.a, f.b, f.M)
        assert bk.q == pytest.approx(q, abs=1e-10)
        assert bk.m.x == pytest.approx(m.x, abs=1e-10)
        assert bk.m.w == pytest.approx(m.w, abs=1e-10)

    def test_stable_dual_round_trip(self):
        res = backward(0.0, 1.0, StableTailDual(0.5, 1.0))
        x = np.array([1.5, 2.0, 4.0, 8.0])
        exact = StableTail(0.5, 1.0).density(x)
        assert np.array([res.m.density(v) for v in x]) == pytest.approx(exact, rel=1e-4)


class TestMoments:
    def test_two_atom(self, two_atom):
        M0, M1, M2, M3 = m_moments_of_M(two_atom)
        assert M0 == pytest.approx(1 / 12, abs=1e-15)
        n1, n2, n3 = 1.5, 1.25, 1.125
        assert M2 == pytest.approx((n1 * n3 - n2**2) / n1**3, abs=1e-15)
        assert M2 == pytest.approx((1 / 12) / 1.5**2, abs=1e-15)

    @given(atomic_measures(min_atoms=2, max_atoms=5))
    def test_match_forward_atoms(self, m):
        M = forward(ThorinPair(0.0, m)).M
        exact = [sum(c * k**-j for c, k in M.atoms) for j in range(4)]
        assert m_moments_of_M(m) == pytest.approx(exact, rel=1e-8)

    def test_degenerate(self):
        assert m_moments_of_M(Atomic((1.0,), (2.0,))) == (0.0, 0.0, 0.0, 0.0)


class TestSupportBracket:
    def test_two_atom(self, two_atom):
        br = support_bracket(0.0, 0.0, two_atom)
        assert br.case == "iv" and (br.s_minus, br.s_plus) == (1.0, 2.0)
        assert br.contains(1.5, 1.5)

    def test_stable_tail(self):
        assert support_bracket(0.0, 0.0, StableTail(0.5, 1.0)).s_minus == 1.0

    @given(atomic_measures(max_atoms=5), st.floats(0.1, 3.0))
    def test_upper_edge_with_translation(self, m, q):
        br = support_bracket(q, 0.0, m)
        assert br.s_plus <= m.x[-1] + m.moment(0.0) / q + 1e-9
        M = forward(ThorinPair(q, m)).M
        if not M.is_zero:
            assert br.contains(*M.support())

    def test_zero_measure_rejected(self):
        with pytest.raises(DomainError):
            support_bracket(0.0, 0.0, Atomic())


class TestStieltjesInversion:
    def test_atom(self):
        inv = stieltjes_invert(lambda z: 1 / (z - 3.0), [2.0, 3.0, 4.0])
        assert inv.atom_mass[1] == pytest.approx(1.0, abs=1e-4)
        assert inv.density[0] == pytest.approx(0.0, abs=1e-10)

    def test_window_jump_density_midpoint(self):
        a, b = 1.0, 0.4
        l1, l2 = 1.0, 2.0

        def G_M(z):
            gm = np.log((z - l1) / (z - l2))
            return a - b / z - 1 / (z * gm)

        x = (l1 + l2) / 2
        inv = stieltjes_invert(lambda z: G_M(z) - a + b / z, [x])
        assert inv.density[0] == pytest.approx(1 / (x * math.pi**2), rel=1e-6)

    def test_stable_density(self):
        inv = stieltjes_invert(lambda z: -((1 - z + 0j) ** -0.5), [2.0, 5.0])
        x = np.array([2.0, 5.0])
        assert inv.density == pytest.approx((x - 1) ** -0.5 / math.pi, rel=1e-4)

    def test_residual_helper(self, two_atom):
        assert identity_residual(0.0, two_atom, 0.5, 2 / 3, Atomic((1 / 12,), (1.5,))) < 1e-14
