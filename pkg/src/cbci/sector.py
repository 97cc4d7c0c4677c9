"""Dirichlet bilinear forms of CBCI processes on exponential test functions and bounds on the sector constant.

For f_lam(x) = exp(-lam x) the form has the closed expression

    E(f_lam, f_mu) = <x f_{lam+mu}>_delta * (a lam mu + lam * int M(du) u mu / ((lam + u)(lam + mu + u))),

with <x f_s>_delta = delta Phi'(s) exp(-delta Phi(s)).  The sector constant
Sect(E) = sup |E(f, g)| / sqrt(E(f, f) E(g, g)) is bracketed from below by explicit test pairs
and the span of a finite family of exponentials, and from above by the Thorin-measure bounds.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .correspondence import backward, forward, support_bracket
from .errors import AlgorithmError, CbciError, DomainError, NotErgodicError
from .measures import Atomic, PositiveMeasure, ThorinPair
from .mechanisms import Quadruplet, is_ergodic, phi, phi_prime

REVERSIBILITY_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_BASIS = (0.5, 1.0, 2.0, 4.0)
REPORT_SPAN = tuple(np.geomspace(1 / 32, 32, 11))
PSD_TOL = 1e-10
EIG_CUTOFF = 1e-9
C2_GRID = np.logspace(-6, 3, 400)
SANDWICH_TOL = 1e-6


@dataclass(frozen=True)
class BilinearValue:
    full: float
    symmetric: float
    antisymmetric: float


def _jump_term(M: PositiveMeasure, lam: float, mu: float) -> float:
    """int M(du) u mu / ((lam + u)(lam + mu + u)), i.e. s g_M(s) - lam g_M(lam) with s = lam + mu."""
    if M.is_zero or mu == 0:
        return 0.0
    s = lam + mu
    return M.integrate(lambda u: u * mu / ((lam + u) * (s + u)))


def _full(quad: Quadruplet, delta: float, lam: float, mu: float) -> float:
    if lam == 0 or mu == 0:
        return 0.0
    s = lam + mu
    weight = delta * phi_prime(quad, s) * math.exp(-delta * phi(quad, s))
    # a lam mu is grouped so that swapping lam and mu rounds identically
    return weight * (quad.a * (lam * mu) + lam * _jump_term(quad.M, lam, mu))


def bilinear_exp(quad: Quadruplet, delta: float | None, lam: float, mu: float) -> BilinearValue:
    """E^delta(f_lam, f_mu) with its symmetric and antisymmetric parts."""
    if lam < 0 or mu < 0:
        raise DomainError("lam and mu must be nonnegative")
    if not is_ergodic(quad):
        raise NotErgodicError("the quadruplet has no stationary distribution")
    delta = quad.delta if delta is None else delta
    if not delta > 0:
        raise DomainError("delta must be positive")
    e_lm = _full(quad, delta, lam, mu)
    e_ml = _full(quad, delta, mu, lam)
    sym = 0.5 * (e_lm + e_ml)
    return BilinearValue(e_lm, sym, e_lm - sym)


def bilinear_matrix(quad: Quadruplet, delta: float | None, lams) -> np.ndarray:
    """A[i, j] = E(f_{lam_i}, f_{lam_j})."""
    if not is_ergodic(quad):
        raise NotErgodicError("the quadruplet has no stationary distribution")
    delta = quad.delta if delta is None else delta
    lams = [float(x) for x in lams]
    return np.array([[_full(quad, delta, li, lj) for lj in lams] for li in lams])


def reversibility_residual(quad: Quadruplet, delta: float | None = None, lams=REVERSIBILITY_GRID) -> float:
    """max |E(f_lam, f_mu) - E(f_mu, f_lam)| over the grid; zero exactly for CIR quadruplets."""
    A = bilinear_matrix(quad, delta, lams)
    return float(np.max(np.abs(A - A.T)))


def bilinear_surface_csv(quad: Quadruplet, delta: float | None, lams, mus) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "mu", "full", "symmetric", "antisymmetric"])
    for lam in lams:
        for mu in mus:
            v = bilinear_exp(quad, delta, lam, mu)
            w.writerow([repr(float(lam)), repr(float(mu)), repr(v.full), repr(v.symmetric), repr(v.antisymmetric)])
    return buf.getvalue()


def sector_of_matrix(A: np.ndarray) -> float:
    """Largest singular value of S^{-1/2} A S^{-1/2}, S the symmetric part, on the range of S.

    With K the skew part this is sqrt(1 + ||S^{-1/2} K S^{-1/2}||^2), which avoids
    subtracting 1 from a norm close to 1.
    """
    A = np.asarray(A, dtype=float)
    if np.array_equal(A, A.T):
        return 1.0
    S = 0.5 * (A + A.T)
    K = 0.5 * (A - A.T)
    w, V = np.linalg.eigh(S)
    top = float(np.max(np.abs(w))) if w.size else 0.0
    if top == 0.0:
        return 1.0
    if w.min() < -PSD_TOL * top:
        raise AlgorithmError(f"symmetric part is not positive semidefinite (min eigenvalue {w.min():.3g})")
    keep = w > EIG_CUTOFF * top
    W = V[:, keep] / np.sqrt(w[keep])
    N = W.T @ K @ W
    return float(math.sqrt(1.0 + np.linalg.norm(N, 2) ** 2))


def empirical_sector(quad: Quadruplet, delta: float | None = None, lams=DEFAULT_BASIS) -> float:
    """Sector constant of E restricted to span{f_lam : lam in lams}; a lower bound for Sect(E)."""
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0) or len(np.unique(lams)) != len(lams):
        raise DomainError("the basis must consist of distinct positive rates")
    return sector_of_matrix(bilinear_matrix(quad, delta, lams))


# upper bounds -----------------------------------------------------------------------------


def _inf_support_M(pair: ThorinPair, M: PositiveMeasure | None) -> float:
    if M is not None:
        return math.inf if M.is_zero else float(M.support()[0])
    if isinstance(pair.m, Atomic):
        res = forward(pair)
        return math.inf if res.M.is_zero else float(res.M.support()[0])
    # a lower estimate of inf S(M) keeps the bound valid
    return support_bracket(pair.q, 0.0, pair.m).s_minus


def upper_bound_thorin(pair: ThorinPair, M: PositiveMeasure | None = None) -> tuple[float, float]:
    """Two upper bounds on Sect - 1 from the Thorin measure m (the first is the sharper).

    ``M`` is the jump measure paired with (0, m); it is computed when omitted.
    """
    m = pair.m
    if pair.q != 0 or m.is_zero:
        return math.inf, math.inf
    m0, m1 = m.moment(0.0), m.moment(1.0)
    inf_m = float(m.support()[0])
    if not (math.isfinite(m1) and math.isfinite(m0) and inf_m > 0):
        return math.inf, math.inf
    spread = max(m1 / m0 - inf_m, 0.0)
    second = math.sqrt(2.0 * spread / inf_m)
    if spread == 0.0:
        return 0.0, 0.0
    inf_M = _inf_support_M(pair, M)
    first = 0.0 if math.isinf(inf_M) else (math.inf if inf_M <= 0 else math.sqrt(2.0 * spread / inf_M))
    return first, second


def upper_bound_quad(a: float, b: float, M: PositiveMeasure) -> float:
    """Upper bound on Sect - 1 in terms of the quadruplet data (a, b, M)."""
    if M.is_zero:
        return 0.0
    M0 = M.moment(0.0)
    s = float(M.support()[0])
    if not (a > 0 and b > 0 and math.isfinite(M0) and s > 0):
        return math.inf
    t = a * s - b - M0
    sq = (math.sqrt(t * t + 4 * a * M0 * s) - t) / (a * s)
    return math.sqrt(max(sq, 0.0))


@dataclass(frozen=True)
class C2Route:
    """Sup of V'(0) - V'(y), V = -log phi, and the bounds it feeds."""

    grid_sup: float
    cap: float
    c2: float
    c1: float
    bound_c2: float
    bound_c1: float


def _v_prime(m: PositiveMeasure, ys: np.ndarray) -> np.ndarray:
    """Mean of u under exp(-u y) m(du)."""
    if isinstance(m, Atomic):
        x, w = m.x, m.w
        logw = np.log(w)[None, :] - np.outer(ys, x - x[0])
        logw -= logw.max(axis=1, keepdims=True)
        p = np.exp(logw)
        return (p * x).sum(axis=1) / p.sum(axis=1)
    out = []
    for y in ys:
        num, den = m.laplace(float(y), 1), m.laplace(float(y), 0)
        out.append(num / den if den > 0 and math.isfinite(num) else math.nan)
    return np.array(out)


def upper_bound_c2(pair: ThorinPair, a: float, M: PositiveMeasure, ys=C2_GRID) -> C2Route:
    """Bound on Sect - 1 via C2 = sup_y (V'(0) - V'(y)) and ||dn~/dn||_inf <= 1/inf S(M)."""
    m = pair.m
    m0, m1 = m.moment(0.0), m.moment(1.0)
    inf_m = float(m.support()[0])
    cap = m1 / m0 - inf_m if (math.isfinite(m0) and math.isfinite(m1)) else math.inf
    vp = _v_prime(m, np.asarray(ys, dtype=float))
    v0 = m1 / m0 if math.isfinite(cap) else math.inf
    diffs = v0 - vp[np.isfinite(vp)]
    grid_sup = float(diffs.max()) if diffs.size else math.nan
    c2 = cap
    c1 = a * c2
    if M.is_zero:
        return C2Route(grid_sup, cap, c2, c1, 0.0, 0.0)
    inf_M = float(M.support()[0])
    ratio = math.inf if inf_M <= 0 else 1.0 / inf_M
    bound_c2 = math.sqrt(2 * c2 * ratio) if math.isfinite(c2 * ratio) else math.inf
    bound_c1 = math.sqrt(2 * c1 * ratio / a) if (a > 0 and math.isfinite(c1 * ratio)) else math.inf
    return C2Route(grid_sup, cap, c2, c1, bound_c2, bound_c1)


# lower bounds -----------------------------------------------------------------------------


def ggc_moments(m: PositiveMeasure, delta: float = 1.0, q: float = 0.0) -> tuple[float, float, float]:
    """(<x>, <x^2>, <x^3>) of the GGC with pair (q, m) raised to the convolution power delta."""
    k1 = delta * (q + m.moment(-1.0))
    k2 = delta * m.moment(-2.0)
    k3 = 2.0 * delta * m.moment(-3.0)
    return k1, k2 + k1 * k1, k3 + 3 * k2 * k1 + k1**3


def lower_bound_general(E_ff: float, E_gg: float, E_fg: float, E_gf: float) -> float:
    """Lower bound on Sect(E) from the four values of E on a pair (f, g); 1 when uninformative."""
    sym = 0.5 * (E_fg + E_gf)
    anti = 0.5 * (E_fg - E_gf)
    prod = E_ff * E_gg
    if not (prod > 0 and anti > 0):
        return 1.0
    delta = prod - sym * sym
    scale = max(abs(prod), sym * sym)
    if math.isclose(E_ff * E_gg, E_fg * sym, rel_tol=1e-12):
        ratio = anti / sym
    elif delta > 1e-14 * scale:
        ratio = anti * anti / delta
    else:
        return math.inf
    return math.sqrt(1.0 + ratio)


def energies_x_x2(quad: Quadruplet, moments: tuple[float, float, float]) -> tuple[float, float, float, float]:
    """(E(f,f), E(g,g), E(f,g), E(g,f)) for f(x) = x, g(x) = x^2."""
    x1, x2, x3 = moments
    M = quad.M
    Mm1, Mm2, Mm3 = (0.0, 0.0, 0.0) if M.is_zero else (M.moment(-1.0), M.moment(-2.0), M.moment(-3.0))
    base = quad.a + Mm1
    E_ff = x1 * base
    E_gg = 4 * x3 * base + 12 * x2 * Mm2 + 12 * x1 * Mm3
    sym = 2 * x2 * base + 3 * x1 * Mm2
    anti = -x1 * Mm2
    return E_ff, E_gg, sym + anti, sym - anti


def lower_bound_moments(m: PositiveMeasure) -> float:
    """Lower bound on Sect(E) for the quadruplet paired with (0, m), delta = 1, from the negative moments of m."""
    n1, n2, n3, n4 = (m.moment(-k) for k in (1.0, 2.0, 3.0, 4.0))
    num = (n1 * n3 - n2 * n2) ** 2
    scale = (n1 * n3) ** 2
    if num <= 1e-28 * scale:
        return 1.0
    den = 2 * n1 * n2**2 * n3 + 4 * n1**2 * n2**3 + 12 * n1**2 * n2 * n4 - 9 * n1**2 * n3**2 - n2**4
    if not den > 0:
        raise AlgorithmError(f"non-positive denominator {den!r} in the moment bound")
    return math.sqrt(1.0 + num / den)


def lower_bound_via_test_pair(quad: Quadruplet, pair: ThorinPair, delta: float = 1.0) -> float:
    """Lower bound on Sect(E^delta) from the pair (x^2, x); the roles are swapped so the skew part is positive."""
    E_ff, E_gg, E_fg, E_gf = energies_x_x2(quad, ggc_moments(pair.m, delta, pair.q))
    return lower_bound_general(E_gg, E_ff, E_gf, E_fg)


def mean_over_b(b: float, delta: float = 1.0) -> float:
    """<x>_delta = delta / b for a quadruplet with a = 0 and a finite jump tail."""
    if not b > 0:
        raise DomainError("b must be positive")
    return delta / b


def trig_counterexample_value(b: float, c: float, delta: float = 1.0) -> float:
    """E(sin, cos) = pi c <x>_delta for the single-size jump quadruplet with a = 0; unbounded in the frequency."""
    return math.pi * c * mean_over_b(b, delta)


# report -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class SectorReport:
    lower_moments: float | None
    lower_general: float | None
    upper_thorin_a: float | None
    upper_thorin_b: float | None
    upper_quad: float | None
    upper_c2: float | None
    empirical: float
    basis: tuple[float, ...]
    matrix_full: np.ndarray = field(repr=False)
    matrix_symmetric: np.ndarray = field(repr=False)
    reversibility: float = 0.0

    @property
    def lower(self) -> float:
        vals = [v for v in (self.lower_moments, self.lower_general) if v is not None]
        return max([1.0, *vals])

    @property
    def upper(self) -> float:
        vals = [v for v in (self.upper_thorin_a, self.upper_thorin_b, self.upper_quad, self.upper_c2) if v is not None]
        return min(vals, default=math.inf)

    def violations(self, tol: float = SANDWICH_TOL) -> list[str]:
        out = []
        if self.empirical < 1.0 - tol:
            out.append(f"empirical sector {self.empirical!r} below 1")
        if self.lower > self.empirical + tol:
            out.append(f"lower bound {self.lower!r} exceeds empirical {self.empirical!r}")
        if self.empirical > self.upper + tol:
            out.append(f"empirical {self.empirical!r} exceeds upper bound {self.upper!r}")
        return out

    def to_json(self) -> dict:
        def num(v):
            if v is None:
                return None
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "lowerMoments": num(self.lower_moments),
            "lowerGeneral": num(self.lower_general),
            "upperThorinA": num(self.upper_thorin_a),
            "upperThorinB": num(self.upper_thorin_b),
            "upperQuad": num(self.upper_quad),
            "upperC2": num(self.upper_c2),
            "empirical": self.empirical,
            "basis": list(self.basis),
            "matrices": {"full": self.matrix_full.tolist(), "symmetric": self.matrix_symmetric.tolist()},
            "reversibilityResidual": self.reversibility,
        }


def _plus_one(v: float | None) -> float | None:
    return None if v is None else 1.0 + v


def report_basis(quad: Quadruplet) -> tuple[float, ...]:
    """REPORT_SPAN scaled by b / delta, the reciprocal of the stationary mean."""
    scale = quad.b / quad.delta if quad.b > 0 else 1.0
    return tuple(float(r * scale) for r in REPORT_SPAN)


def sector_report(source: Quadruplet | ThorinPair, delta: float | None = None, basis=None) -> SectorReport:
    """Collect every available bound on Sect(E^delta) together with the empirical value on ``basis``.

    Without ``basis`` the rates come from ``report_basis``; four fixed rates are often too few
    for the empirical value to reach the moment lower bound.
    """
    if isinstance(source, ThorinPair):
        pair = source
        res = forward(pair)
        delta = 1.0 if delta is None else delta
        quad = Quadruplet(res.a, res.b, res.M, delta)
    else:
        quad = source if delta is None else source.with_delta(delta)
        delta = quad.delta
        if not is_ergodic(quad):
            raise NotErgodicError("the quadruplet has no stationary distribution")
        try:
            pair = backward(quad.a, quad.b, quad.M).pair
        except CbciError:
            pair = None

    if basis is None:
        basis = report_basis(quad)
    A = bilinear_matrix(quad, delta, basis)
    empirical = sector_of_matrix(A)
    residual = float(np.max(np.abs(A - A.T)))

    lower_m = lower_g = up_a = up_b = up_c2 = None
    if pair is not None and not pair.m.is_zero:
        m = pair.m
        inf_m = float(m.support()[0])
        usable = pair.q == 0 and inf_m > 0 and math.isfinite(m.moment(0.0))
        if usable and delta == 1.0:
            lower_m = lower_bound_moments(m)
        if inf_m > 0:
            lower_g = lower_bound_via_test_pair(quad, pair, delta)
        a_bound, b_bound = upper_bound_thorin(pair, quad.M)
        up_a, up_b = _plus_one(a_bound), _plus_one(b_bound)
        if usable:
            up_c2 = _plus_one(upper_bound_c2(pair, quad.a, quad.M).bound_c2)
    elif quad.M.is_zero:
        lower_m = lower_g = up_a = up_b = up_c2 = 1.0
    up_q = _plus_one(upper_bound_quad(quad.a, quad.b, quad.M))
    return SectorReport(
        lower_m, lower_g, up_a, up_b, up_q, up_c2, empirical, tuple(float(x) for x in basis),
        A, 0.5 * (A + A.T), residual,
    )
