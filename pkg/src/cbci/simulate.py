"""Monte Carlo for CBCI processes: exact GGC stationary samples and Euler paths with jumps.

Paths follow

    dX = (delta - (b + c) X) dt + sqrt(2 a X+) dW + jumps,

where jumps arrive at rate rho X with rho = M-bar_1 and sizes drawn from the mixture
sum_i (c_i kappa_i / rho) Exp(kappa_i) for atomic M = sum_i c_i eps_{kappa_i}.  The diffusion
uses full truncation and the state is reflected at zero.  Paths are simulated in fixed-size
chunks, each with its own RNG stream spawned from the master seed, so results do not depend on
the number of worker threads.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .correspondence import backward
from .errors import DomainError
from .measures import Atomic, PositiveMeasure, ThorinPair, laplace_exponent
from .mechanisms import Quadruplet, phi_prime, transient_laplace

CHUNK = 16384
MAX_ATOMS = 64
DEFAULT_PATHS = 100_000
JUMP_WARN = 0.1


@dataclass(frozen=True)
class StationaryLaw:
    """The GGC nu_delta with Laplace exponent delta * Phi_{q,m}."""

    pair: ThorinPair
    delta: float = 1.0

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError("delta must be positive")

    @property
    def support_infimum(self) -> float:
        return self.delta * self.pair.q

    def laplace(self, lam: float) -> float:
        return math.exp(-self.delta * laplace_exponent(self.pair, lam, cross_check=False))


@dataclass(frozen=True)
class Discretization:
    measure: Atomic
    bias: float  # sup over a lambda grid of |Phi_discrete - Phi|


def discretize(m: PositiveMeasure, atoms: int = MAX_ATOMS, tail: float = 1e-6) -> Discretization:
    """Quantile binning of a Thorin measure into at most ``atoms`` atoms.

    Bins carry equal shares of int u^{-1} m(du); each atom keeps the bin's mass and its
    u^{-1}-moment, so the mean of the GGC is preserved.
    """
    if isinstance(m, Atomic):
        return Discretization(m, 0.0)
    lo, hi = m.support()
    total_inv = m.moment(-1.0)
    if not (math.isfinite(total_inv) and lo > 0):
        raise DomainError("discretization needs inf S(m) > 0 and a finite mean")
    if math.isinf(hi):
        hi = 2.0 * lo
        while m.integrate(lambda u: 1.0 / u, hi, math.inf) > tail * total_inv:
            hi *= 2.0
    grid = np.geomspace(lo, hi, 513) if hi / lo > 4 else np.linspace(lo, hi, 513)
    cells = np.array([m.integrate(lambda u: 1.0 / u, x0, x1) for x0, x1 in zip(grid[:-1], grid[1:])])
    cum = np.concatenate(([0.0], np.cumsum(cells)))
    targets = np.linspace(0.0, cum[-1], atoms + 1)
    edges = np.unique(np.interp(targets, cum, grid))
    pairs = []
    for x0, x1 in zip(edges[:-1], edges[1:]):
        mass = m.integrate(lambda u: np.ones_like(u), x0, x1)
        inv = m.integrate(lambda u: 1.0 / u, x0, x1)
        if mass > 0 and inv > 0:
            pairs.append((mass, mass / inv))
    disc = Atomic.from_pairs(pairs)
    lams = np.geomspace(1e-2, 1e2, 25)
    bias = max(abs(disc.log_integral(lam) - m.log_integral(lam)) for lam in lams)
    return Discretization(disc, float(bias))


def _gamma_sum(rng: np.random.Generator, q: float, m: Atomic, delta: float, count: int) -> np.ndarray:
    out = np.full(count, delta * q)
    for g, x in m.atoms:
        out += rng.gamma(delta * g, 1.0 / x, size=count)
    return out


def sample_stationary(law: StationaryLaw, count: int, seed: int) -> np.ndarray:
    """i.i.d. samples of nu_delta: delta q + sum_i Gamma(shape delta gamma_i, rate lambda_i)."""
    if count < 0:
        raise DomainError("count must be nonnegative")
    m = law.pair.m
    disc = Atomic() if m.is_zero else discretize(m).measure
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return _gamma_sum(rng, law.pair.q, disc, law.delta, count)


@dataclass(frozen=True)
class SimConfig:
    T: float
    dt: float
    paths: int = DEFAULT_PATHS
    seed: int = 0
    chunk: int = CHUNK
    workers: int | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.T >= 0):
            raise DomainError("need dt > 0 and T >= 0")
        if self.paths < 1 or self.chunk < 1:
            raise DomainError("paths and chunk must be positive")


@dataclass(frozen=True)
class SimEnsemble:
    seed: int
    paths: int
    dt: float
    T: float
    x0: float | str
    terminals: np.ndarray = field(repr=False)
    jump_counts: np.ndarray = field(repr=False)
    warnings: tuple[str, ...] = ()
    bias: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_id", "terminal", "jumps"])
        for i, (x, n) in enumerate(zip(self.terminals, self.jump_counts)):
            w.writerow([i, repr(float(x)), int(n)])
        return buf.getvalue()

    def summary(self) -> dict:
        x = self.terminals
        return {
            "seed": self.seed, "paths": self.paths, "dt": self.dt, "T": self.T,
            "x0": self.x0, "mean": float(x.mean()), "variance": float(x.var(ddof=1)) if len(x) > 1 else 0.0,
            "min": float(x.min()), "jumps_total": int(self.jump_counts.sum()),
            "warnings": list(self.warnings), "discretization_bias": self.bias,
        }


def default_dt(quad: Quadruplet) -> float:
    k = quad.b + quad.c
    return 1e-3 * min(1.0, 1.0 / k) if k > 0 else 1e-3


def _jump_tables(M: Atomic) -> tuple[float, np.ndarray, np.ndarray]:
    if M.is_zero:
        return 0.0, np.zeros(0), np.zeros(0)
    rates = M.x
    mass = M.w * rates
    rho = float(mass.sum())
    return rho, np.cumsum(mass) / rho, rates


def _run_chunk(quad: Quadruplet, M: Atomic, x_start: np.ndarray, cfg: SimConfig, rng: np.random.Generator):
    a, delta = quad.a, quad.delta
    k = quad.b + M.moment(0.0) if not M.is_zero else quad.b
    rho, cdf, rates = _jump_tables(M)
    dt = cfg.dt
    steps = int(round(cfg.T / dt))
    x = x_start.copy()
    jumps = np.zeros(len(x), dtype=np.int64)
    sq = math.sqrt(dt)
    for _ in range(steps):
        xp = np.maximum(x, 0.0)
        x_new = x + (delta - k * xp) * dt
        if a > 0:
            x_new += np.sqrt(2.0 * a * xp) * (sq * rng.standard_normal(len(x)))
        if rho > 0:
            # thinning: candidates at the envelope rate rho (X+ + delta dt), accepted at rho (X+ + delta tau)
            env = xp + delta * dt
            n = rng.poisson(rho * env * dt)
            hit = np.flatnonzero(n)
            for idx in hit:
                for _ in range(n[idx]):
                    tau = rng.random() * dt
                    if rng.random() * env[idx] <= xp[idx] + delta * tau:
                        comp = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(rates) - 1)
                        x_new[idx] += rng.exponential(1.0 / rates[comp])
                        jumps[idx] += 1
        x = np.abs(x_new)
    return x, jumps


def simulate_path(quad: Quadruplet, delta: float | None, x0: float | StationaryLaw, T: float, dt: float | None = None,
                  seed: int = 0, paths: int = DEFAULT_PATHS, workers: int | None = None) -> SimEnsemble:
    """Terminal values X_T of independent paths of the CBCI process with quadruplet ``quad``.

    ``x0`` is either a starting point or a stationary law to draw starting points from.
    """
    if delta is not None:
        quad = quad.with_delta(delta)
    dt = default_dt(quad) if dt is None else dt
    cfg = SimConfig(T, dt, paths, seed, CHUNK, workers)
    M, bias = quad.M, 0.0
    if not isinstance(M, Atomic):
        if M.is_zero:
            M = Atomic()
        else:
            d = discretize(M)
            M, bias = d.measure, d.bias
    if not (math.isfinite(M.moment(1.0)) if not M.is_zero else True):
        raise DomainError("jump rate must be finite")
    if isinstance(x0, StationaryLaw):
        start_label: float | str = "stationary"
    else:
        if not x0 >= 0:
            raise DomainError("x0 must be nonnegative")
        start_label = float(x0)

    warnings = []
    rho = 0.0 if M.is_zero else M.moment(1.0)
    typical = max(x0 if not isinstance(x0, StationaryLaw) else 0.0, quad.delta * phi_prime(quad, 0.0))
    if rho * typical * dt > JUMP_WARN:
        warnings.append(f"rho * X * dt = {rho * typical * dt:.3g} exceeds {JUMP_WARN}")

    sizes = [min(cfg.chunk, paths - s) for s in range(0, paths, cfg.chunk)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def job(i: int):
        rng = np.random.default_rng(streams[i])
        if isinstance(x0, StationaryLaw):
            disc = Atomic() if x0.pair.m.is_zero else discretize(x0.pair.m).measure
            start = _gamma_sum(rng, x0.pair.q, disc, x0.delta, sizes[i])
        else:
            start = np.full(sizes[i], float(x0))
        return _run_chunk(quad, M, start, cfg, rng)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, range(len(sizes))))
    else:
        results = [job(i) for i in range(len(sizes))]
    terminals = np.concatenate([r[0] for r in results])
    counts = np.concatenate([r[1] for r in results])
    return SimEnsemble(seed, paths, dt, T, start_label, terminals, counts, tuple(warnings), bias)


def empirical_laplace(ensemble: SimEnsemble | np.ndarray, lams) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean of exp(-lam X_T) for each lam with its CLT standard error."""
    x = ensemble.terminals if isinstance(ensemble, SimEnsemble) else np.asarray(ensemble, dtype=float)
    if x.size == 0:
        raise DomainError("empty ensemble")
    vals, errs = [], []
    constant = bool(np.all(x == x[0]))
    for lam in np.asarray(lams, dtype=float):
        if lam == 0 or constant:
            # a degenerate ensemble has no sampling error
            vals.append(math.exp(-lam * float(x[0])))
            errs.append(0.0)
            continue
        e = np.exp(-lam * x)
        vals.append(float(e.mean()))
        errs.append(float(e.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0)
    return np.array(vals), np.array(errs)


def z_scores(empirical: np.ndarray, errors: np.ndarray, exact: np.ndarray) -> np.ndarray:
    diff = empirical - exact
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / errors
    return np.where(errors > 0, z, np.where(np.abs(diff) <= 1e-12, 0.0, np.inf))


@dataclass(frozen=True)
class TransientReport:
    t: float
    lams: np.ndarray
    empirical: np.ndarray
    errors: np.ndarray
    exact: np.ndarray
    z: np.ndarray
    threshold: float = 4.0

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z))) if self.z.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_abs_z < self.threshold

    def to_json(self) -> dict:
        return {
            "t": self.t, "lambda": self.lams.tolist(), "empirical": self.empirical.tolist(),
            "stderr": self.errors.tolist(), "exact": self.exact.tolist(), "z": self.z.tolist(),
            "max_abs_z": self.max_abs_z, "passed": self.passed,
        }


def verify_transient(quad: Quadruplet, delta: float | None, x0: float, t: float, lams, ensemble: SimEnsemble,
                     threshold: float = 4.0) -> TransientReport:
    """Compare the ensemble with exp(-x0 psi(t, lam) - delta int_0^t psi(s, lam) ds)."""
    if delta is not None:
        quad = quad.with_delta(delta)
    if not math.isclose(ensemble.T, t, rel_tol=1e-12, abs_tol=1e-15):
        raise DomainError(f"ensemble horizon {ensemble.T} differs from t = {t}")
    lams = np.asarray(lams, dtype=float)
    emp, err = empirical_laplace(ensemble, lams)
    exact = np.array([transient_laplace(quad, t, float(lam), x0) for lam in lams])
    return TransientReport(float(t), lams, emp, err, exact, z_scores(emp, err, exact), threshold)


def stationary_pair(quad: Quadruplet) -> ThorinPair:
    """Thorin pair of the stationary law of ``quad`` (delta = 1)."""
    return backward(quad.a, quad.b, quad.M).pair
