import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbci import Atomic, Quadruplet, ThorinPair, Window
from cbci.errors import DomainError
from cbci.mechanisms import stationary_laplace, support_infimum
from cbci.simulate import (
    StationaryLaw,
    discretize,
    empirical_laplace,
    sample_stationary,
    simulate_path,
    verify_transient,
    z_scores,
)

CIR = Quadruplet(1.0, 1.0)
TWO = Quadruplet(0.5, 2 / 3, Atomic((1 / 12,), (1.5,)))
TWO_PAIR = ThorinPair(0.0, Atomic((1.0, 1.0), (1.0, 2.0)))


class TestStationarySampling:
    def test_exponential(self):
        x = sample_stationary(StationaryLaw(ThorinPair(0.0, Atomic((1.0,), (1.0,)))), 100_000, seed=1)
        assert abs(x.mean() - 1.0) < 4 / math.sqrt(len(x))

    def test_two_atom_mean(self):
        x = sample_stationary(StationaryLaw(TWO_PAIR), 100_000, seed=2)
        sd = math.sqrt(1.0 + 0.25)
        assert abs(x.mean() - 1.5) < 4 * sd / math.sqrt(len(x))

    def test_translation_floor(self):
        x = sample_stationary(StationaryLaw(ThorinPair(0.5, Atomic((0.5,), (1.0,))), 2.0), 10_000, seed=3)
        assert x.min() >= 1.0

    def test_seed_determinism(self):
        law = StationaryLaw(TWO_PAIR)
        assert np.array_equal(sample_stationary(law, 100, 5), sample_stationary(law, 100, 5))

    def test_discretized_window_keeps_mean(self):
        d = discretize(Window(1.0, 3.0))
        assert len(d.measure) <= 64
        assert d.measure.moment(-1.0) == pytest.approx(math.log(3.0), rel=1e-10)
        assert d.bias < 1e-3


class TestPaths:
    def test_reproducible_across_workers(self):
        kw = dict(T=0.05, dt=0.01, seed=11, paths=40_000)
        one = simulate_path(TWO, None, 1.0, workers=1, **kw)
        three = simulate_path(TWO, None, 1.0, workers=3, **kw)
        assert np.array_equal(one.terminals, three.terminals)
        assert np.array_equal(one.jump_counts, three.jump_counts)

    @given(st.floats(0.0, 3.0), st.integers(0, 2**32 - 1))
    def test_nonnegative(self, x0, seed):
        ens = simulate_path(Quadruplet(2.0, 1.0, Atomic((0.2,), (1.0,)), 0.1), None, x0, 0.2, 0.01, seed, 500)
        assert np.all(ens.terminals >= 0)

    def test_stationarity_preserved(self):
        ens = simulate_path(TWO, None, StationaryLaw(TWO_PAIR), 0.5, 2e-3, seed=4, paths=20_000)
        lams = np.linspace(0.2, 3.0, 8)
        emp, err = empirical_laplace(ens, lams)
        exact = np.array([stationary_laplace(TWO, lam) for lam in lams])
        assert np.max(np.abs(z_scores(emp, err, exact))) < 4

    def test_transient_cir(self):
        ens = simulate_path(CIR, None, 2.0, 0.5, 1e-3, seed=9, paths=20_000)
        rep = verify_transient(CIR, None, 2.0, 0.5, np.linspace(0.2, 3.0, 8), ens)
        assert rep.passed, rep.to_json()

    def test_support_floor(self):
        quad = Quadruplet(0.0, 0.5, Atomic((0.5,), (2.0,)))
        x0, t, dt = 3.0, 1.0, 1e-3
        ens = simulate_path(quad, None, x0, t, dt, seed=21, paths=5_000)
        assert ens.terminals.min() >= support_infimum(quad, t, x0) - 2 * dt * (quad.b + quad.c) * x0

    def test_rejects_negative_start(self):
        with pytest.raises(DomainError):
            simulate_path(CIR, None, -1.0, 1.0)

    def test_csv(self):
        ens = simulate_path(CIR, None, 1.0, 0.01, 0.01, seed=0, paths=3)
        lines = ens.to_csv().splitlines()
        assert lines[0] == "path_id,terminal,jumps" and len(lines) == 4


class TestEmpiricalLaplace:
    def test_zero_ensemble(self):
        vals, errs = empirical_laplace(np.zeros(50), [0.5, 1.0, 4.0])
        assert np.all(vals == 1.0) and np.all(errs == 0.0)

    def test_zero_rate(self):
        vals, errs = empirical_laplace(np.random.default_rng(0).exponential(size=20), [0.0])
        assert vals[0] == 1.0 and errs[0] == 0.0

    def test_time_zero_transient(self):
        ens = simulate_path(CIR, None, 1.7, 0.0, 0.01, seed=0, paths=10)
        rep = verify_transient(CIR, None, 1.7, 0.0, [0.5, 1.0], ens)
        assert np.array_equal(rep.empirical, rep.exact) and rep.max_abs_z == 0.0
