"""The correspondence between Thorin pairs (q, m) and CBCI data (a, b, M).

The two sides are tied by the identity

    q + g_m(lam) = 1 / (a lam + b + lam g_M(lam)),    g(lam) = int mu(du)/(lam + u),

equivalently G_m(z) - q = 1/(a z - b - z G_M(z)) for the Stieltjes transforms.  Atomic measures
map to atomic measures whose atoms interlace; other measures go through Stieltjes-Perron inversion.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._numerics import neville_at_zero
from .errors import AlgorithmError, DomainError, InconclusiveError, NotErgodicError
from .measures import (
    ZERO,
    Atomic,
    FreePoissonScaled,
    Grid,
    PositiveMeasure,
    PowerTail,
    StableTail,
    StableTailDual,
    Sum,
    ThorinPair,
)
from .mechanisms import Quadruplet, branching_R0, is_ergodic

RESIDUAL_GRID = np.logspace(-3, 3, 100)
EXACT_TOL = 1e-8
INVERSION_TOL = 1e-4
RICHARDSON_LEVELS = 7
ATOM_FLOOR = 1e-6
GRID_POINTS = 801
TAIL_POINTS = 240


@dataclass(frozen=True)
class CorrespondenceResult:
    direction: str
    pair: ThorinPair
    quad: Quadruplet
    identity_residual: float
    method: str
    details: dict = field(default_factory=dict, compare=False)

    @property
    def a(self) -> float:
        return self.quad.a

    @property
    def b(self) -> float:
        return self.quad.b

    @property
    def M(self) -> PositiveMeasure:
        return self.quad.M

    @property
    def q(self) -> float:
        return self.pair.q

    @property
    def m(self) -> PositiveMeasure:
        return self.pair.m

    @property
    def ok(self) -> bool:
        tol = INVERSION_TOL if self.method == "inversion" else EXACT_TOL
        return self.identity_residual < tol

    def to_json(self) -> dict:
        return {
            "direction": self.direction,
            "method": self.method,
            "identity_residual": self.identity_residual,
            "pair": self.pair.to_json(),
            "quadruplet": {"a": self.a, "b": self.b, "M": self.M.to_json()},
            "details": self.details,
        }


def identity_residual(q: float, m: PositiveMeasure, a: float, b: float, M: PositiveMeasure, lams=RESIDUAL_GRID) -> float:
    """max over lams of |(q + g_m(lam)) (a lam + b + lam g_M(lam)) - 1|."""
    quad = Quadruplet(a, b, M) if (a or b or not M.is_zero) else None
    worst = 0.0
    for lam in lams:
        left = q + (0.0 if m.is_zero else m.resolvent(lam))
        right = branching_R0(quad, lam) if quad else 0.0
        worst = max(worst, abs(left * right - 1.0))
    return worst


def coefficients(q: float, m: PositiveMeasure) -> tuple[float, float]:
    """(a, b): a = 0 if q > 0 else 1/m-bar_0, b = 1/(q + m-bar_{-1}), with 1/inf = 0."""
    if q > 0:
        a = 0.0
    else:
        m0 = m.moment(0.0)
        a = 0.0 if math.isinf(m0) else 1.0 / m0
    denom = q + m.moment(-1.0)
    b = 0.0 if math.isinf(denom) else 1.0 / denom
    return float(a), float(b)


def jump_mass_from_m(q: float, m: PositiveMeasure, b: float | None = None) -> float:
    """M-bar_0 predicted from (q, m): 1/q - b, m-bar_1/m-bar_0^2 - b, or inf."""
    if b is None:
        b = coefficients(q, m)[1]
    if q > 0:
        return 1.0 / q - b
    m0, m1 = m.moment(0.0), m.moment(1.0)
    if math.isinf(m0) or math.isinf(m1):
        return math.inf
    return m1 / m0**2 - b


# forward ----------------------------------------------------------------------------------


def forward(pair: ThorinPair, x_grid=None, truncate: float | None = None) -> CorrespondenceResult:
    """Map (q, m) to (a, b, M)."""
    q, m = pair.q, pair.m
    if m.is_zero:
        raise DomainError("forward needs a non-zero Thorin measure")
    a, b = coefficients(q, m)
    details: dict = {}
    if isinstance(m, Atomic) and len(m) == 1 and q == 0:
        M, method = ZERO, "closed-form"
        details["note"] = "CIR"
    elif isinstance(m, Atomic):
        M, info = _forward_atomic(q, m)
        method = "polynomial"
        details.update(info)
    elif isinstance(m, StableTail) and q == 0:
        M, method = StableTailDual(m.alpha, m.kappa), "closed-form"
    else:
        M, info = _forward_inversion(q, m, a, b, x_grid, truncate)
        method = "inversion"
        details.update(info)
    predicted = jump_mass_from_m(q, m, b)
    actual = 0.0 if M.is_zero else M.moment(0.0)
    details["jump_mass"] = actual
    details["jump_mass_predicted"] = predicted
    if method != "inversion" and math.isfinite(predicted):
        if abs(actual - predicted) > 1e-8 * max(1.0, abs(predicted)):
            raise AlgorithmError(f"jump mass {actual!r} disagrees with the moment formula {predicted!r}")
    residual = identity_residual(q, m, a, b, M)
    return CorrespondenceResult("forward", pair, Quadruplet(a, b, M), residual, method, details)


def _bracket_root(f, lo: float, hi: float) -> float:
    return brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _forward_atomic(q: float, m: Atomic) -> tuple[Atomic, dict]:
    lam, gam = m.x, m.w

    def h(k):
        return q + math.fsum(gam / (lam - k))

    kappas = []
    for lo, hi in zip(lam[:-1], lam[1:]):
        kappas.append(_bracket_root(h, np.nextafter(lo, np.inf), np.nextafter(hi, -np.inf)))
    if q > 0:
        cap = lam[-1] + gam.sum() / q
        # with one atom the root sits exactly at the cap, so allow a few ulps of rounding
        top = cap
        for _ in range(8):
            if h(top) >= 0:
                break
            top = np.nextafter(top, np.inf)
        kappas.append(top if h(top) == 0 else _bracket_root(h, np.nextafter(lam[-1], np.inf), top))
    kap = np.array(kappas)
    # interlacing of the atoms of m and M
    inter = np.empty(len(lam) + len(kap))
    inter[0::2] = lam
    inter[1::2] = kap
    if np.any(np.diff(inter) <= 0):
        raise AlgorithmError("atoms of m and M fail to interlace")
    if q > 0 and kap[-1] > (lam[-1] + gam.sum() / q) * (1 + 1e-14):
        raise AlgorithmError("last atom of M exceeds sup S(m) + m-bar_0/q")
    lead = q if q > 0 else gam.sum()
    weights = []
    for i, k in enumerate(kap):
        p_val = np.prod(lam - k)
        others = np.prod(np.delete(kap, i) - k)
        c_prod = -p_val / (k * lead * others)
        c_deriv = 1.0 / (k * math.fsum(gam / (lam - k) ** 2))
        if not (c_prod > 0 and c_deriv > 0):
            raise AlgorithmError(f"negative residue at kappa = {k!r}")
        if abs(c_prod - c_deriv) > 1e-8 * c_deriv:
            raise AlgorithmError("residue formulas disagree")
        weights.append(c_prod)
    return Atomic(tuple(weights), tuple(kap)), {"interlacing": True}


def _forward_inversion(q, m, a, b, x_grid, truncate):
    lo, hi = m.support()
    x_grid = _inversion_grid(lo, hi, x_grid, truncate)

    def G_M(z):
        z = np.asarray(z, dtype=complex)
        return a - b / z - 1.0 / (z * (np.asarray(m.stieltjes(z)) - q))

    inv = stieltjes_invert(G_M, x_grid)
    parts = [inv.measure(tail=math.isinf(hi) and truncate is None)]
    info = {"flagged_points": int((~inv.converged).sum()), "grid_points": len(inv.x)}
    if q > 0 and math.isfinite(hi):
        # the jump measure may carry one atom where G_m(x) = q beyond the support of m
        def D(x):
            return m.stieltjes(x).real - q

        x0 = _sign_change_root(D, hi, hi + m.moment(0.0) / q, toward_edge=True)
        if x0 is not None:
            mass = -1.0 / (x0 * m.stieltjes_derivative(x0).real)
            if not mass > 0:
                raise AlgorithmError("negative atom mass in the jump measure")
            parts.append(Atomic((mass,), (x0,)))
            info["atom"] = [mass, x0]
    M = parts[0] if len(parts) == 1 else Sum(tuple((1.0, p) for p in parts))
    return M, info


def _cluster_grid(lo: float, hi: float, n: int = GRID_POINTS) -> np.ndarray:
    """Interior points clustered toward both ends of (lo, hi)."""
    k = np.arange(1, n + 1)
    return lo + (hi - lo) * 0.5 * (1 - np.cos(np.pi * k / (n + 1)))


def _inversion_grid(lo, hi, extra, truncate) -> np.ndarray:
    """Default clustered grid over the support (truncated if unbounded) merged with ``extra``."""
    top = hi if math.isfinite(hi) else (truncate or lo + 100.0 * (1.0 + lo))
    grid = _cluster_grid(lo, top)
    if math.isinf(hi) and truncate is None:
        # geometric run far into the tail; the rest is modelled by a fitted power law
        grid = np.concatenate([grid[grid < 0.5 * top], np.geomspace(0.5 * top, 1e4 * top, TAIL_POINTS)])
        top = grid[-1] * (1 + 1e-12)
    if lo == 0:
        # densities may blow up at the origin; switch to geometric spacing there
        join = grid[np.searchsorted(grid, 0.02 * top)]
        grid = np.concatenate([np.geomspace(1e-12 * top, join, 800, endpoint=False), grid[grid >= join]])
    if extra is not None:
        extra = np.asarray(extra, dtype=float)
        grid = np.union1d(grid, extra[(extra > lo) & (extra < top)])
    return grid


def _sign_change_root(D, edge: float, far: float, toward_edge: bool) -> float | None:
    """Locate a simple zero of D on (edge, far] (or [far, edge)) by scanning toward the edge."""
    fa = D(far)
    x_prev, f_prev = far, fa
    for k in range(1, 60):
        x = edge + (far - edge) * 2.0**-k
        if x == edge:
            break
        fx = D(x)
        if fx == 0:
            return x
        if math.copysign(1, fx) != math.copysign(1, f_prev):
            lo, hi = sorted((x, x_prev))
            return _bracket_root(D, lo, hi)
        x_prev, f_prev = x, fx
    return None


# backward ---------------------------------------------------------------------------------


def backward(a: float, b: float, M: PositiveMeasure, x_grid=None, truncate: float | None = None) -> CorrespondenceResult:
    """Map (a, b, M) with an ergodic mechanism to the Thorin pair (q, m)."""
    quad = Quadruplet(a, b, M)
    if not is_ergodic(quad):
        raise NotErgodicError("the mechanism is not ergodic, so there is no stationary law")
    if a > 0:
        q = 0.0
    else:
        M0 = 0.0 if M.is_zero else M.moment(0.0)
        q = 0.0 if math.isinf(M0) else 1.0 / (b + M0)
    details: dict = {}
    if M.is_zero:
        m = Atomic((1.0 / a,), (b / a,)) if a > 0 else ZERO
        method = "closed-form"
        details["note"] = "CIR" if a > 0 else "pure translation"
    elif isinstance(M, Atomic):
        m = _backward_atomic(a, b, M)
        method = "polynomial"
    elif isinstance(M, StableTailDual) and a == 0 and math.isclose(b, M.kappa**M.alpha, rel_tol=1e-14, abs_tol=0.0):
        m, method = StableTail(M.alpha, M.kappa), "closed-form"
    else:
        m, info = _backward_inversion(a, b, M, q, x_grid, truncate)
        method = "inversion"
        details.update(info)
    pair = ThorinPair(q, m)
    residual = identity_residual(q, m, a, b, M)
    return CorrespondenceResult("backward", pair, quad, residual, method, details)


def _backward_atomic(a: float, b: float, M: Atomic) -> Atomic:
    kap, c = M.x, M.w

    def k(x):
        return a - b / x + math.fsum(c / (kap - x))

    roots = []
    if b > 0:
        x = 0.5 * kap[0]
        while k(x) >= 0:
            x *= 0.5
        roots.append(_bracket_root(k, x, np.nextafter(kap[0], -np.inf)))
    for lo, hi in zip(kap[:-1], kap[1:]):
        roots.append(_bracket_root(k, np.nextafter(lo, np.inf), np.nextafter(hi, -np.inf)))
    if a > 0:
        # a = b/x + sum c/(x - kappa) <= (b + M-bar_0)/(x - kappa_max) caps the last root
        top = kap[-1] + (b + c.sum()) / a
        for _ in range(8):
            if k(top) >= 0:
                break
            top = np.nextafter(top, np.inf)
        roots.append(top if k(top) == 0 else _bracket_root(k, np.nextafter(kap[-1], np.inf), top))
    xs = np.array(roots)
    inter = np.sort(np.concatenate([xs, kap]))
    if len(np.unique(inter)) != len(inter):
        raise AlgorithmError("atoms of m and M fail to interlace")
    with np.errstate(over="ignore"):
        weights = [1.0 / (a + math.fsum(c * kap / (kap - x) ** 2)) for x in xs]
    if any(not w > 0 for w in weights):
        raise AlgorithmError("negative atom weight in the Thorin measure")
    return Atomic(tuple(weights), tuple(xs))


def _backward_inversion(a, b, M, q, x_grid, truncate):
    lo, hi = M.support()
    x_grid = _inversion_grid(lo, hi, x_grid, truncate)

    def D(z):
        z = np.asarray(z, dtype=complex)
        return a * z - b - z * np.asarray(M.stieltjes(z))

    def G_m(z):
        return q + 1.0 / D(z)

    inv = stieltjes_invert(G_m, x_grid)
    parts = [inv.measure(tail=math.isinf(hi) and truncate is None)]
    info = {"flagged_points": int((~inv.converged).sum()), "grid_points": len(inv.x), "atoms": []}

    def D_real(x):
        return D(x).real

    def dD(x):
        return a - M.stieltjes(x).real - x * M.stieltjes_derivative(x).real

    candidates = []
    if math.isfinite(hi):
        far = hi + 1.0 + (b + 1.0 + M.moment(0.0)) / a if a > 0 else 2.0 * hi + 1.0
        candidates.append(_sign_change_root(D_real, hi, far, True))
        if a > 0 and b > 0 and candidates[-1] is None and D_real(far) * D_real(hi + (far - hi) * 2.0**-50) < 0:
            raise AlgorithmError("denominator changes sign beyond the support but no pole was found")
    if lo > 0:
        candidates.append(_sign_change_root(D_real, lo, 0.0, True))
    for x0 in candidates:
        if x0 is None:
            continue
        mass = 1.0 / dD(x0)
        if not mass > 0:
            raise AlgorithmError(f"negative residue at pole {x0!r}")
        parts.append(Atomic((mass,), (x0,)))
        info["atoms"].append([mass, x0])
    m = parts[0] if len(parts) == 1 else Sum(tuple((1.0, p) for p in parts))
    return m, info


# moments and support ----------------------------------------------------------------------


def m_moments_of_M(m: PositiveMeasure) -> tuple[float, float, float, float]:
    """(M-bar_0, M-bar_{-1}, M-bar_{-2}, M-bar_{-3}) of the jump measure paired with (0, m)."""
    if isinstance(m, Atomic) and len(m) == 1:
        return 0.0, 0.0, 0.0, 0.0
    m0, m1 = m.moment(0.0), m.moment(1.0)
    n1, n2, n3, n4 = (m.moment(-k) for k in (1.0, 2.0, 3.0, 4.0))
    b = 0.0 if math.isinf(n1) else 1.0 / n1
    M0 = math.inf if (math.isinf(m0) or math.isinf(m1)) else m1 / m0**2 - b
    if math.isinf(n1):
        raise DomainError("m-bar_{-1} must be finite")
    M1 = math.inf if math.isinf(n2) else n2 / n1**2 - (0.0 if math.isinf(m0) else 1.0 / m0)
    M2 = math.inf if math.isinf(n3) else (n1 * n3 - n2**2) / n1**3
    M3 = math.inf if math.isinf(n4) else (n1**2 * n4 - 2 * n1 * n2 * n3 + n2**3) / n1**4
    return M0, M1, M2, M3


@dataclass(frozen=True)
class SupportBracket:
    s_minus: float
    s_plus: float
    closed_form_minus: float
    closed_form_plus: float
    case: str

    def contains(self, lo: float, hi: float, tol: float = 1e-9) -> bool:
        return self.s_minus - tol <= lo and hi <= self.s_plus + tol * max(1.0, abs(hi))


def support_bracket(q: float, r: float, m: PositiveMeasure) -> SupportBracket:
    """Interval containing the support of M, with the closed-form outer bounds."""
    if m.is_zero:
        raise DomainError("support bracket needs a non-zero m")
    if q < 0 or r < 0:
        raise DomainError("q and r must be nonnegative")
    m0, m_1 = m.moment(0.0), m.moment(-1.0)
    a = 0.0 if q > 0 else (0.0 if math.isinf(r + m0) else 1.0 / (r + m0))
    b = 0.0 if r > 0 else (0.0 if math.isinf(q + m_1) else 1.0 / (q + m_1))
    case = {(False, False): "i", (True, False): "ii", (False, True): "iii", (True, True): "iv"}[(a > 0, b > 0)]
    inf_s, sup_s = m.support()

    # s_minus: sup of s < inf S(m) with s (q + int m(du)/(u - s)) < r
    if r == 0:
        s_minus = 0.0
    else:
        def f_minus(s):
            return s * (q - m.stieltjes(s).real) - r

        edge = np.nextafter(inf_s, -np.inf)
        if f_minus(edge) <= 0:
            s_minus = inf_s
        else:
            s_minus = _bracket_root(f_minus, 0.0, edge)
    # s_plus: inf of s > sup S(m) with s (q - int m(du)/(s - u)) > r
    if q == 0 or math.isinf(sup_s):
        s_plus = math.inf
    else:
        def f_plus(s):
            return s * (q - m.stieltjes(s).real) - r

        edge = np.nextafter(sup_s, np.inf)
        if f_plus(edge) > 0:
            s_plus = sup_s
        else:
            top = 2.0 * sup_s + 1.0
            while f_plus(top) <= 0:
                top *= 2.0
            s_plus = _bracket_root(f_plus, edge, top)

    A = r + m0 + q * inf_s
    if math.isinf(A):
        cf_minus = 0.0
    else:
        disc = max(A * A - 4 * q * r * inf_s, 0.0)
        cf_minus = 2 * r * inf_s / (A + math.sqrt(disc)) if A > 0 else 0.0
    if q == 0 or math.isinf(sup_s) or math.isinf(m0):
        cf_plus = math.inf
    else:
        Ap = r + m0 + q * sup_s
        cf_plus = (Ap + math.sqrt(max(Ap * Ap - 4 * q * r * sup_s, 0.0))) / (2 * q)
    # with b > 0 the support of M cannot start below that of m; with a > 0 it cannot end above it
    if case in ("iii", "iv"):
        s_minus = float(inf_s)
    if case in ("ii", "iv"):
        s_plus = float(sup_s)
    return SupportBracket(s_minus, s_plus, cf_minus, cf_plus, case)


# Stieltjes-Perron inversion ---------------------------------------------------------------


@dataclass(frozen=True)
class InversionResult:
    x: np.ndarray
    density: np.ndarray
    atom_mass: np.ndarray
    converged: np.ndarray
    error: np.ndarray

    def measure(self, tail: bool = False) -> PositiveMeasure:
        """Grid measure of the density part plus any detected atoms.

        With ``tail`` the density beyond the last grid point is continued by the power law
        through the last two values, provided it decays.
        """
        dens = np.where(np.isfinite(self.density), np.maximum(self.density, 0.0), 0.0)
        parts: list[PositiveMeasure] = [Grid(tuple(self.x), tuple(dens))]
        if tail and len(self.x) >= 2 and dens[-1] > 0 and dens[-2] > 0:
            (x1, x2), (d1, d2) = self.x[-2:], dens[-2:]
            power = math.log(d1 / d2) / math.log(x2 / x1)
            if power > 0:
                parts.append(PowerTail(d2 * x2**power, power, float(x2)))
        atoms = [(w, x) for w, x in zip(self.atom_mass, self.x) if w > 0]
        if atoms:
            parts.append(Atomic.from_pairs(atoms))
        return parts[0] if len(parts) == 1 else Sum(tuple((1.0, p) for p in parts))

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["x", "density", "atom_mass"])
        for x, d, w in zip(self.x, self.density, self.atom_mass):
            out.writerow([repr(float(x)), repr(float(d)), repr(float(w))])
        return buf.getvalue()


def default_heights(x: np.ndarray) -> np.ndarray:
    y0 = 1e-3 * np.maximum(np.abs(x), 1e-12)
    return y0[:, None] * 2.0 ** -np.arange(RICHARDSON_LEVELS)[None, :]


def stieltjes_invert(G, x_grid, ys=None, rtol: float = 1e-6) -> InversionResult:
    """Recover dmu/dx = -(1/pi) lim_{y->0} Im G(x + i y) on a grid.

    For each x the values at the heights ``ys`` (default y0 2^-k, k = 0..6) are extrapolated to
    y = 0 by a quadratic through the three smallest heights.  A point whose y |Im G| settles above
    1e-6 is reported as an atom instead.
    """
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if ys is None:
        Y = default_heights(x)
    else:
        ys = np.asarray(ys, dtype=float)
        if ys.ndim != 1 or len(ys) < 3 or np.any(ys <= 0) or np.any(np.diff(ys) >= 0):
            raise DomainError("heights must be positive, strictly decreasing, at least three")
        Y = np.broadcast_to(ys, (len(x), len(ys)))
    Z = x[:, None] + 1j * Y
    try:
        vals = np.asarray(G(Z), dtype=complex)
    except (TypeError, ValueError):
        vals = np.vectorize(lambda z: complex(G(z)))(Z)
    if not np.all(np.isfinite(vals)):
        raise InconclusiveError("transform is not finite at some evaluation point")
    f = -vals.imag / math.pi
    w = -vals.imag * Y
    n = len(x)
    density = np.empty(n)
    atom = np.zeros(n)
    conv = np.ones(n, bool)
    err = np.zeros(n)
    for i in range(n):
        est, _ = neville_at_zero(Y[i, -3:], f[i, -3:])
        prev, _ = neville_at_zero(Y[i, -4:-1], f[i, -4:-1])
        err[i] = abs(est - prev)
        if w[i, -1] > ATOM_FLOOR and abs(w[i, -1] - w[i, -2]) <= 1e-3 * w[i, -1]:
            mass, _ = neville_at_zero(Y[i, -3:], w[i, -3:])
            atom[i] = mass
            density[i] = 0.0
            continue
        density[i] = est
        conv[i] = err[i] <= rtol * max(1.0, abs(est))
    return InversionResult(x, density, atom, conv, err)
