"""Branching and immigration mechanisms of a CBCI process, the psi-semigroup, and Laplace transforms.

A quadruplet (a, b, M, delta) determines the branching mechanism

    R(lam) = -lam * R0(lam),   R0(lam) = a*lam + b + lam * g_M(lam),

with g_M(lam) = int M(du)/(lam + u), and immigration F(lam) = delta*lam.  The jump measure has
density n(y) = int u^2 exp(-u y) M(du) and tail density n~(y) = int u exp(-u y) M(du).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
from scipy.integrate import solve_ivp

from ._numerics import integrate
from ._numerics import quad as _quad
from .errors import DomainError, InconclusiveError, SolverError
from .measures import ZERO, Atomic, PositiveMeasure, StableTail, StableTailDual, measure_from_json

PHI_CUTOFF = -40.0
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class Quadruplet:
    a: float
    b: float
    M: PositiveMeasure = ZERO
    delta: float = 1.0

    def __post_init__(self):
        for name in ("a", "b"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be a nonnegative real")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError("delta must be positive")
        if self.a == 0 and self.b == 0 and self.M.is_zero:
            raise DomainError("a = b = 0 with M = 0 is a trivial mechanism")

    @property
    def c(self) -> float:
        """Mean jump-tail mass M-bar_0 (may be inf)."""
        return 0.0 if self.M.is_zero else self.M.moment(0.0)

    @property
    def rho(self) -> float:
        """Total jump rate per unit state M-bar_1 (may be inf)."""
        return 0.0 if self.M.is_zero else self.M.moment(1.0)

    def with_delta(self, delta: float) -> Quadruplet:
        return Quadruplet(self.a, self.b, self.M, delta)

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "M": self.M.to_json(), "delta": self.delta}


def quadruplet_from_json(obj: dict) -> Quadruplet:
    try:
        M = measure_from_json(obj["M"]) if obj.get("M") else ZERO
        return Quadruplet(float(obj["a"]), float(obj["b"]), M, float(obj.get("delta", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed quadruplet: {exc}") from exc


def branching_R0(quad: Quadruplet, lam: float) -> float:
    """R0(lam) = a lam + b + lam g_M(lam), the positive factor of -R(lam)/lam."""
    jump = 0.0 if (quad.M.is_zero or lam == 0) else lam * quad.M.resolvent(lam)
    return quad.a * lam + quad.b + jump


def branching_R(quad: Quadruplet, lam: float) -> float:
    if lam < 0:
        raise DomainError("lam must be nonnegative")
    if lam == 0:
        return 0.0
    return -lam * branching_R0(quad, lam)


def jump_density(quad: Quadruplet, y: float) -> tuple[float, float]:
    """(n(y), n~(y)): densities of the jump measure and of its tail."""
    if y < 0:
        raise DomainError("y must be nonnegative")
    if quad.M.is_zero:
        return 0.0, 0.0
    return quad.M.laplace(y, 2), quad.M.laplace(y, 1)


def is_ergodic(quad: Quadruplet) -> bool:
    """Whether the stationary exponent Phi is finite: b > 0 or int_0^1 du/(u g_M(u)) < inf."""
    if quad.b > 0:
        return True
    M = quad.M
    if M.is_zero:
        return False
    if M.support()[0] > 0:
        # g_M(0) = M-bar_{-1} < inf, so the integrand behaves like 1/u
        return False
    if isinstance(M, StableTailDual | StableTail):
        # u g_M(u) ~ u^alpha (dual) or u^(1 - alpha) near 0
        return True
    val = integrate(lambda u: 1.0 / (u * M.resolvent(u)), 0.0, 1.0, split=0.5)
    return math.isfinite(val)


def phi_prime(quad: Quadruplet, lam: float) -> float:
    return 1.0 / branching_R0(quad, lam)


def phi(quad: Quadruplet, lam: float) -> float:
    """Stationary Laplace exponent Phi(lam) = int_0^lam du / R0(u); inf when non-ergodic."""
    if lam < 0:
        raise DomainError("lam must be nonnegative")
    if lam == 0:
        return 0.0
    if quad.M.is_zero:
        a, b = quad.a, quad.b
        if b == 0:
            return math.inf
        return lam / b if a == 0 else math.log1p(a * lam / b) / a
    if not is_ergodic(quad):
        return math.inf

    def h(s):
        u = math.exp(s)
        return u / branching_R0(quad, u)

    top = math.log(lam)
    if top <= PHI_CUTOFF:
        return lam / branching_R0(quad, lam)
    body = _checked_quad(h, PHI_CUTOFF, top)
    h0, h1 = h(PHI_CUTOFF), h(PHI_CUTOFF - 1.0)
    rate = math.log(h0 / h1)
    if not rate > 0:
        raise InconclusiveError("Phi integrand does not decay below the cutoff")
    return body + h0 / rate


def _checked_quad(f, a, b) -> float:
    val, err = _quad(f, a, b, rtol=1e-12)
    if err > 1e-9 * abs(val) + 1e-300:
        raise InconclusiveError(f"quadrature error {err:.3g} for value {val:.6g}")
    return val


@dataclass(frozen=True)
class PsiSolution:
    t: float
    lam: float
    psi: float
    integral: float  # int_0^t psi(s) ds
    residual: float


def _implicit_time(quad: Quadruplet, psi_val: float, lam: float) -> float:
    """int_psi^lam du/(u R0(u)), computed in the log variable."""
    if psi_val == lam:
        return 0.0
    val, _ = _quad(lambda s: 1.0 / branching_R0(quad, math.exp(s)), math.log(psi_val), math.log(lam), rtol=1e-13)
    return val


def psi(quad: Quadruplet, t: float, lam: float) -> PsiSolution:
    """Solve d psi/dt = R(psi), psi(0) = lam, together with int_0^t psi.

    The ODE is integrated for w = log psi, dw/dt = -R0(exp w), which keeps psi positive and
    resolves exponentially small values.  The implicit identity t = int_psi^lam du/(u R0(u)) and
    the bracket lam exp(-t R0(lam)) <= psi <= lam exp(-t R0(psi)) are checked afterwards.
    """
    if t < 0 or lam < 0:
        raise DomainError("t and lam must be nonnegative")
    if t == 0 or lam == 0:
        return PsiSolution(t, lam, lam, 0.0 if t == 0 else 0.0, 0.0)
    sol = _solve_log_ode(quad, lam, np.array([t]))
    w, integral = sol.y[0, -1], sol.y[1, -1]
    return _checked(quad, t, lam, w, integral)


def psi_path(quad: Quadruplet, ts, lam: float) -> list[PsiSolution]:
    """psi at each time in the increasing grid ``ts`` from a single integration."""
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) <= 0) or ts[0] <= 0:
        raise DomainError("time grid must be positive and strictly increasing")
    sol = _solve_log_ode(quad, lam, ts)
    return [_checked(quad, t, lam, w, i) for t, w, i in zip(ts, sol.y[0], sol.y[1])]


def _solve_log_ode(quad: Quadruplet, lam: float, ts: np.ndarray):
    def rhs(_, y):
        u = math.exp(y[0])
        return [-branching_R0(quad, u), u]

    sol = solve_ivp(rhs, (0.0, float(ts[-1])), [math.log(lam), 0.0], method="DOP853",
                    t_eval=ts, rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise SolverError(f"psi integration failed: {sol.message}", lam=lam, t=float(ts[-1]))
    return sol


def _checked(quad, t, lam, w, integral) -> PsiSolution:
    value = math.exp(w)
    residual = abs(t - _implicit_time(quad, value, lam))
    lower = lam * math.exp(-t * branching_R0(quad, lam))
    upper = lam * math.exp(-t * branching_R0(quad, value))
    slack = 1e-8 * value
    if not (lower - slack <= value <= upper + slack):
        raise SolverError("psi left its a-priori bracket", t=t, lam=lam, psi=value, lower=lower, upper=upper)
    if residual > RESIDUAL_TOL:
        raise SolverError("psi fails the implicit time identity", t=t, lam=lam, psi=value, residual=residual)
    return PsiSolution(float(t), float(lam), value, float(integral), residual)


def transient_laplace(quad: Quadruplet, t: float, lam: float, x: float) -> float:
    """E_x exp(-lam X_t) = exp(-x psi(t, lam) - delta int_0^t psi(s, lam) ds)."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    if t == 0:
        return math.exp(-lam * x)
    sol = psi(quad, t, lam)
    return math.exp(-x * sol.psi - quad.delta * sol.integral)


def stationary_laplace(quad: Quadruplet, lam: float) -> float:
    return math.exp(-quad.delta * phi(quad, lam))


def support_infimum(quad: Quadruplet, t: float, x: float) -> float:
    """Infimum of the support of the law of X_t started at x (t = inf: stationary law).

    Zero when a > 0 or the jump mean c is infinite; otherwise
    x exp(-t (b+c)) + delta/(b+c) (1 - exp(-t (b+c))).
    """
    if t < 0 or x < 0:
        raise DomainError("t and x must be nonnegative")
    if quad.a > 0:
        return 0.0
    c = quad.c
    if math.isinf(c):
        return 0.0
    k = quad.b + c
    if math.isinf(t):
        return quad.delta / k
    e = math.exp(-t * k)
    return x * e + quad.delta / k * -math.expm1(-t * k)


# Neumann series for the Levy density when a = 0 ---------------------------------------------


class _ExpPoly:
    """Sum of coef * y^k exp(-rate y) / k!, i.e. Laplace transform coef / (s + rate)^(k+1)."""

    def __init__(self, terms: dict[tuple[float, int], float]):
        self.terms = {key: v for key, v in terms.items() if v != 0.0}

    def __mul__(self, other: _ExpPoly) -> _ExpPoly:
        out: dict[tuple[float, int], float] = {}
        for (r1, k1), c1 in self.terms.items():
            for (r2, k2), c2 in other.terms.items():
                for key, v in _pf_product(r1, k1 + 1, r2, k2 + 1):
                    out[key] = out.get(key, 0.0) + c1 * c2 * v
        return _ExpPoly(out)

    def __call__(self, y: float) -> float:
        return math.fsum(c * y**k * math.exp(-r * y) / factorial(k) for (r, k), c in self.terms.items())


def _pf_product(alpha: float, m: int, beta: float, n: int):
    """Partial fractions of 1/((s+alpha)^m (s+beta)^n) as ((rate, power-1), coef) pairs."""
    if alpha == beta:
        return [((alpha, m + n - 1), 1.0)]
    out = []
    for i in range(m):
        out.append(((alpha, m - i - 1), (-1) ** i * comb(n - 1 + i, i) / (beta - alpha) ** (n + i)))
    for i in range(n):
        out.append(((beta, n - i - 1), (-1) ** i * comb(m - 1 + i, i) / (alpha - beta) ** (m + i)))
    return out


def levy_series_a0(quad: Quadruplet, y: float, N: int) -> float:
    """Partial sum y^-1 sum_{k=1..N} (b+c)^-(k+1) n~^{*k}(y) of the Levy density (a = 0)."""
    if quad.a != 0:
        raise DomainError("the Neumann series needs a = 0")
    if not isinstance(quad.M, Atomic) or quad.M.is_zero:
        raise DomainError("the Neumann series is implemented for non-zero atomic M only")
    if not y > 0 or N < 1:
        raise DomainError("need y > 0 and N >= 1")
    k = quad.b + quad.c
    tail = _ExpPoly({(x, 0): g * x for g, x in quad.M.atoms})
    power = tail
    total = 0.0
    for j in range(1, N + 1):
        if j > 1:
            power = power * tail
        total += power(y) / k ** (j + 1)
    return total / y


# CSV emitters -------------------------------------------------------------------------------


def psi_table(quad: Quadruplet, ts, lams) -> str:
    """CSV with columns t, lambda, value, residual for psi on a (t, lambda) grid."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["t", "lambda", "value", "residual"])
    for lam in lams:
        for sol in psi_path(quad, ts, lam):
            out.writerow([repr(sol.t), repr(sol.lam), repr(sol.psi), repr(sol.residual)])
    return buf.getvalue()


def laplace_table(quad: Quadruplet, ts, lams, x: float) -> str:
    """CSV of the transient Laplace transform; residual is the psi identity defect."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["t", "lambda", "value", "residual"])
    for lam in lams:
        for sol in psi_path(quad, ts, lam):
            value = math.exp(-x * sol.psi - quad.delta * sol.integral)
            out.writerow([repr(sol.t), repr(sol.lam), repr(value), repr(sol.residual)])
    return buf.getvalue()
