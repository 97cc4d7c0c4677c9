"""Positive measures on (0, inf), their transforms, and the gamma convolutions they generate.

A Thorin pair (q, m) defines the infinitely divisible law on [0, inf) with Laplace exponent

    Phi(lam) = q*lam + int log(1 + lam/u) m(du),

whose Levy measure has density phi(y)/y with phi(y) = int exp(-u*y) m(du).
"""
from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._numerics import DIVERGE_RATIO, DIVERGE_RUN, gauss_legendre_piece, integrate_shells, quad, quad_piece
from .errors import ConsistencyError, DomainError, InconclusiveError

Weight = Callable[[np.ndarray], np.ndarray]

THORIN_CUTOFF = 0.5


def _as_complex(z):
    arr = np.asarray(z, dtype=complex)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return complex(arr) if scalar else arr


class PositiveMeasure:
    """Common interface; subclasses override whatever admits a closed form."""

    kind: str = ""

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def is_atomic(self) -> bool:
        return False

    def support(self) -> tuple[float, float]:
        """(inf S, sup S) of the support; (inf, -inf) for the zero measure."""
        raise NotImplementedError

    def density(self, u):
        raise NotImplementedError(f"{type(self).__name__} has no density")

    # generic numerics ---------------------------------------------------------------

    def _raw_piece(self, f):
        return quad_piece(f)

    def _piece(self, w: Weight):
        return self._raw_piece(lambda u: w(u) * self.density(u))

    def _split(self, lo: float, hi: float) -> float | None:
        return None

    def integrate(self, w: Weight, lo: float | None = None, hi: float | None = None, eager: bool = False) -> float:
        """int w(u) m(du) over (lo, hi) intersected with the support, with divergence detection.

        ``eager`` applies the short-run divergence rule meant for moment-type integrals.
        """
        s_lo, s_hi = self.support()
        lo = s_lo if lo is None else max(lo, s_lo)
        hi = s_hi if hi is None else min(hi, s_hi)
        if not lo < hi:
            return 0.0
        return integrate_shells(self._piece(w), lo, hi, self._split(lo, hi), eager)

    def moment(self, s: float) -> float:
        """m-bar_s = int u^s m(du); may be inf."""
        return self.integrate(lambda u: u**s, eager=True)

    def total_mass(self) -> float:
        return self.moment(0.0)

    def resolvent(self, lam: float) -> float:
        """g(lam) = int m(du)/(lam + u) for lam >= 0."""
        if lam == 0:
            return self.moment(-1.0)
        return self.integrate(lambda u: 1.0 / (lam + u))

    def laplace(self, y: float, k: int = 0) -> float:
        """int u^k exp(-u y) m(du)."""
        return self.integrate(lambda u: u**k * np.exp(-u * y))

    def log_integral(self, lam: float) -> float:
        """int log(1 + lam/u) m(du)."""
        if lam == 0:
            return 0.0
        return self.integrate(lambda u: np.log1p(lam / u))

    def _check_domain(self, z: np.ndarray) -> None:
        lo, hi = self.support()
        on_axis = (z.imag == 0) & (z.real >= lo) & (z.real <= hi)
        if np.any(on_axis):
            raise DomainError(f"z on the support interval [{lo}, {hi}] of the real axis")

    def stieltjes(self, z):
        """G(z) = int m(du)/(z - u) for z off the real support interval."""
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        out = np.array([self._stieltjes_numeric(complex(v)) for v in arr.ravel()]).reshape(arr.shape)
        return _out(out, scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        vals = []
        for v in arr.ravel():
            v = complex(v)
            re = self.integrate(lambda u: -np.real(1.0 / (v - u) ** 2))
            im = self.integrate(lambda u: -np.imag(1.0 / (v - u) ** 2))
            vals.append(re + 1j * im)
        return _out(np.array(vals).reshape(arr.shape), scalar)

    def _stieltjes_numeric(self, z: complex) -> complex:
        lo, hi = self.support()
        x, y = z.real, z.imag
        near = lo - 1e-3 * (1 + abs(lo)) < x < hi + 1e-3 * (1 + abs(hi))
        if y == 0 or not near:
            re = self.integrate(lambda u: np.real(1.0 / (z - u)))
            im = self.integrate(lambda u: np.imag(1.0 / (z - u))) if y != 0 else 0.0
            return re + 1j * im
        # subtract the value of the density at Re z so the remaining integrand stays bounded
        xc = min(max(x, lo), hi)
        width = 0.25 * ((hi - lo) if math.isfinite(hi) else max(xc - lo, 1.0))
        wl, wr = max(lo, xc - width), min(hi, xc + width)
        rho = float(self.density(xc)) if lo < xc < hi else math.nan

        def part(f, a, b):
            if not a < b:
                return 0.0
            return integrate_shells(self._raw_piece(f), a, b)

        total = 0j
        if math.isfinite(rho):
            def excess(u):
                return self.density(u) - rho
        else:
            excess = self.density
        for a, b in ((wl, xc), (xc, wr)):
            total += part(lambda u: excess(u) * np.real(1.0 / (z - u)), a, b)
            total += 1j * part(lambda u: excess(u) * np.imag(1.0 / (z - u)), a, b)
        if math.isfinite(rho):
            total += rho * (np.log(z - wl) - np.log(z - wr))
        for a, b in ((lo, wl), (wr, hi)):
            total += part(lambda u: self.density(u) * np.real(1.0 / (z - u)), a, b)
            total += 1j * part(lambda u: self.density(u) * np.imag(1.0 / (z - u)), a, b)
        return complex(total)

    def is_thorin(self) -> bool:
        cut = THORIN_CUTOFF
        near = self.integrate(lambda u: np.abs(np.log(u)), hi=cut, eager=True)
        far = self.integrate(lambda u: 1.0 / u, lo=cut, eager=True)
        return math.isfinite(near) and math.isfinite(far)

    # algebra ------------------------------------------------------------------------

    def scaled(self, c: float) -> PositiveMeasure:
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return Sum(((c, self),))

    def __add__(self, other: PositiveMeasure) -> PositiveMeasure:
        if not isinstance(other, PositiveMeasure):
            return NotImplemented
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        return Sum(((1.0, self), (1.0, other)))

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Atomic(PositiveMeasure):
    """sum_i weights[i] * delta(locations[i]); the empty list is the zero measure."""

    weights: tuple[float, ...] = ()
    locations: tuple[float, ...] = ()
    kind = "atomic"

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        x = tuple(float(v) for v in self.locations)
        if len(w) != len(x):
            raise DomainError("weights and locations differ in length")
        if any(not (v > 0 and math.isfinite(v)) for v in w):
            raise DomainError("atom weights must be positive and finite")
        if any(not (v > 0 and math.isfinite(v)) for v in x):
            raise DomainError("atom locations must be positive and finite")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise DomainError("atom locations must be strictly increasing")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", x)

    @classmethod
    def from_pairs(cls, atoms: Iterable[tuple[float, float]]) -> Atomic:
        """Build from (weight, location) pairs in any order."""
        pairs = sorted(((float(g), float(x)) for g, x in atoms), key=lambda p: p[1])
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @property
    def w(self) -> np.ndarray:
        return np.array(self.weights)

    @property
    def x(self) -> np.ndarray:
        return np.array(self.locations)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.weights, self.locations))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def is_zero(self) -> bool:
        return not self.weights

    @property
    def is_atomic(self) -> bool:
        return True

    def support(self):
        if self.is_zero:
            return math.inf, -math.inf
        return self.locations[0], self.locations[-1]

    def integrate(self, w, lo=None, hi=None, eager=False):
        if self.is_zero:
            return 0.0
        x = self.x
        keep = np.ones(len(x), bool)
        if lo is not None:
            keep &= x > lo
        if hi is not None:
            keep &= x <= hi
        if not keep.any():
            return 0.0
        return math.fsum(self.w[keep] * np.asarray(w(x[keep]), dtype=float))

    def moment(self, s):
        return math.fsum(g * x**s for g, x in self.atoms)

    def resolvent(self, lam):
        return math.fsum(g / (lam + x) for g, x in self.atoms)

    def laplace(self, y, k=0):
        return math.fsum(g * x**k * math.exp(-x * y) for g, x in self.atoms)

    def log_integral(self, lam):
        return math.fsum(g * math.log1p(lam / x) for g, x in self.atoms)

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        if self.is_zero:
            return _out(np.zeros_like(arr), scalar)
        out = (self.w / (arr[..., None] - self.x)).sum(axis=-1)
        return _out(out, scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        if self.is_zero:
            return _out(np.zeros_like(arr), scalar)
        out = -(self.w / (arr[..., None] - self.x) ** 2).sum(axis=-1)
        return _out(out, scalar)

    def is_thorin(self):
        return True

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return Atomic(tuple(c * g for g in self.weights), self.locations)

    def __add__(self, other):
        if isinstance(other, Atomic):
            merged: dict[float, float] = {}
            for g, x in self.atoms + other.atoms:
                merged[x] = merged.get(x, 0.0) + g
            return Atomic.from_pairs((g, x) for x, g in merged.items())
        return super().__add__(other)

    def to_json(self):
        return {"kind": self.kind, "atoms": [[g, x] for g, x in self.atoms]}


ZERO = Atomic()


def _stable_const(alpha: float) -> float:
    # 1/(Gamma(alpha) Gamma(1 - alpha))
    return math.sin(math.pi * alpha) / math.pi


@dataclass(frozen=True)
class StableTail(PositiveMeasure):
    """Density (u - kappa)^(-alpha) / (Gamma(alpha) Gamma(1 - alpha)) on (kappa, inf)."""

    alpha: float
    kappa: float = 0.0
    kind = "stable_tail"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise DomainError("kappa must be a nonnegative real")

    def support(self):
        return self.kappa, math.inf

    def density(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(u > self.kappa, np.abs(u - self.kappa) ** -self.alpha, 0.0)
        return d * _stable_const(self.alpha)

    def moment(self, s):
        a, k = self.alpha, self.kappa
        if k == 0 or s >= a - 1:
            return math.inf
        if s == -1:
            return k**-a
        return k ** (s - a + 1) * special.beta(a - s - 1, 1 - a) * _stable_const(a)

    def resolvent(self, lam):
        if lam + self.kappa == 0:
            return math.inf
        return (lam + self.kappa) ** -self.alpha

    def laplace(self, y, k=0):
        if k == 0:
            return math.exp(-self.kappa * y) * y ** (self.alpha - 1) / math.gamma(self.alpha)
        if k == 1:
            phi = self.laplace(y)
            return phi * (self.kappa + (1 - self.alpha) / y)
        return super().laplace(y, k)

    def log_integral(self, lam):
        a, k = self.alpha, self.kappa
        return ((lam + k) ** (1 - a) - k ** (1 - a)) / (1 - a)

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        return _out(-np.power(self.kappa - arr, -self.alpha), scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        return _out(-self.alpha * np.power(self.kappa - arr, -self.alpha - 1), scalar)

    def is_thorin(self):
        return True

    def to_json(self):
        return {"kind": self.kind, "alpha": self.alpha, "kappa": self.kappa}


@dataclass(frozen=True)
class StableTailDual(PositiveMeasure):
    """Density u^(-1) (u - kappa)^alpha / (Gamma(alpha) Gamma(1 - alpha)) on (kappa, inf).

    Its resolvent satisfies lam * g(lam) = (lam + kappa)^alpha - kappa^alpha, so it is the jump
    spectral measure paired with ``StableTail(alpha, kappa)``.
    """

    alpha: float
    kappa: float = 0.0
    kind = "stable_tail_dual"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise DomainError("kappa must be a nonnegative real")

    def support(self):
        return self.kappa, math.inf

    def density(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(u > self.kappa, np.abs(u - self.kappa) ** self.alpha / u, 0.0)
        return d * _stable_const(self.alpha)

    def _split(self, lo, hi):
        return max(2.0 * lo, lo + 1.0)

    def moment(self, s):
        a, k = self.alpha, self.kappa
        if k == 0 or s >= -a:
            return math.inf
        return k ** (s + a) * special.beta(-s - a, 1 + a) * _stable_const(a)

    def resolvent(self, lam):
        a, k = self.alpha, self.kappa
        if lam == 0:
            return math.inf if k == 0 else a * k ** (a - 1)
        return ((lam + k) ** a - k**a) / lam

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        a, k = self.alpha, self.kappa
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (np.power(k - arr, a) - k**a) / arr
        out = np.where(arr == 0, -self.resolvent(0.0), out)
        return _out(out, scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        a, k = self.alpha, self.kappa
        out = (-a * np.power(k - arr, a - 1) * arr - (np.power(k - arr, a) - k**a)) / arr**2
        return _out(out, scalar)

    def is_thorin(self):
        return True

    def to_json(self):
        return {"kind": self.kind, "alpha": self.alpha, "kappa": self.kappa}


@dataclass(frozen=True)
class Window(PositiveMeasure):
    """Lebesgue measure restricted to (lo, hi)."""

    lo: float
    hi: float
    kind = "window"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi < math.inf):
            raise DomainError("window needs 0 <= lo < hi < inf")

    def support(self):
        return self.lo, self.hi

    def density(self, u):
        u = np.asarray(u, dtype=float)
        return np.where((u > self.lo) & (u < self.hi), 1.0, 0.0)

    def moment(self, s):
        lo, hi = self.lo, self.hi
        if s == -1:
            return math.inf if lo == 0 else math.log(hi / lo)
        if lo == 0:
            return math.inf if s < -1 else hi ** (s + 1) / (s + 1)
        return (hi ** (s + 1) - lo ** (s + 1)) / (s + 1)

    def resolvent(self, lam):
        if lam == 0:
            return self.moment(-1.0)
        return math.log((lam + self.hi) / (lam + self.lo))

    def laplace(self, y, k=0):
        lo, hi = self.lo, self.hi
        if y == 0:
            return self.moment(float(k))
        e_lo, e_hi = math.exp(-lo * y), math.exp(-hi * y)
        if k == 0:
            return e_lo * -math.expm1(-(hi - lo) * y) / y
        if k == 1:
            return (lo * e_lo - hi * e_hi) / y + e_lo * -math.expm1(-(hi - lo) * y) / y**2
        return super().laplace(y, k)

    def log_integral(self, lam):
        def F(u):
            a = (u + lam) * math.log(u + lam)
            return a - (u * math.log(u) if u > 0 else 0.0)

        return F(self.hi) - F(self.lo)

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        out = np.log(arr - self.lo) - np.log(arr - self.hi)
        # on the real axis outside the support both logs share a branch; avoid the +-i pi pair
        with np.errstate(divide="ignore", invalid="ignore"):
            on_axis = np.log((arr.real - self.lo) / (arr.real - self.hi))
        out = np.where(arr.imag == 0, on_axis, out)
        return _out(out, scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        return _out(1.0 / (arr - self.lo) - 1.0 / (arr - self.hi), scalar)

    def is_thorin(self):
        return True

    def to_json(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class FreePoissonScaled(PositiveMeasure):
    """scale * p(u) du with p the free Poisson (Marchenko-Pastur) density, beta >= 1.

    p(u) = sqrt(4 alpha^2 beta - (u - alpha (1 + beta))^2) / (2 pi alpha u)
    on [alpha (1 - sqrt beta)^2, alpha (1 + sqrt beta)^2].
    """

    scale: float
    alpha: float
    beta: float
    kind = "free_poisson"

    def __post_init__(self):
        if not (self.scale > 0 and self.alpha > 0):
            raise DomainError("scale and alpha must be positive")
        if not self.beta >= 1:
            raise DomainError("beta >= 1 is required for a Thorin measure")

    @property
    def edges(self) -> tuple[float, float]:
        return _free_poisson_edges(self.alpha, self.beta)

    def support(self):
        return self.edges

    def density(self, u):
        return self.scale * free_poisson_density(self.alpha, self.beta, u)

    def integrate(self, w, lo=None, hi=None, eager=False):
        a, b = self.alpha, self.beta
        c0 = self.edges[0]
        h = 2 * a * math.sqrt(b)
        t0, t1 = 0.0, math.pi
        # u(theta) = c0 + 2 h sin^2(theta/2) sweeps the support monotonically
        if lo is not None:
            if lo >= c0 + 2 * h:
                return 0.0
            if lo > c0:
                t0 = 2 * math.asin(math.sqrt((lo - c0) / (2 * h)))
        if hi is not None:
            if hi <= c0:
                return 0.0
            if hi < c0 + 2 * h:
                t1 = 2 * math.asin(math.sqrt((hi - c0) / (2 * h)))

        def f(t):
            u = c0 + 2 * h * math.sin(0.5 * t) ** 2
            # sin^2(t)/u stays bounded at t = 0 even when c0 = 0
            return float(w(np.float64(u))) * (h * math.sin(t)) ** 2 / (2 * math.pi * a * u)

        # with beta near 1 the lower edge c0 is tiny and negative moments peak at theta ~ sqrt(c0/h)
        tc = 2 * math.asin(math.sqrt(min(c0 / (2 * h), 1.0)))
        cuts = [t0, *(p for p in tc * 2.0 ** np.arange(-3, 40) if t0 < p < min(t1, 1.0)), t1]
        val = err = 0.0
        for x0, x1 in zip(cuts, cuts[1:]):
            v, e = quad(f, x0, x1, rtol=1e-12)
            val, err = val + v, err + e
        if not math.isfinite(val) or err > 1e-8 * abs(val) + 1e-300:
            raise InconclusiveError(f"free Poisson quadrature error {err:.3g}")
        return self.scale * val

    def moment(self, s):
        if self.beta == 1 and s <= -0.5:
            return math.inf
        if s == 0:
            return self.scale
        return self.integrate(lambda u: u**s)

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        a, b = self.alpha, self.beta
        l, r = self.edges
        # (z + a(1-b) - root) / (2 a z) rationalized, which stays accurate when a is large
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.sqrt(arr - l) * np.sqrt(arr - r)
            out = 2.0 / (arr + a * (1 - b) + root)
        zero = arr == 0
        if np.any(zero):
            out = np.where(zero, -self.moment(-1.0) / self.scale, out)
        return _out(self.scale * out, scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        a, b = self.alpha, self.beta
        l, r = self.edges
        root = np.sqrt(arr - l) * np.sqrt(arr - r)
        den = arr + a * (1 - b) + root
        dden = 1 + (2 * arr - l - r) / (2 * root)
        return _out(self.scale * (-2.0 * dden / den**2), scalar)

    def is_thorin(self):
        return True

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return FreePoissonScaled(self.scale * c, self.alpha, self.beta)

    def to_json(self):
        return {"kind": self.kind, "scale": self.scale, "alpha": self.alpha, "beta": self.beta}


def _free_poisson_edges(alpha: float, beta: float) -> tuple[float, float]:
    r = math.sqrt(beta)
    return alpha * ((beta - 1) / (1 + r)) ** 2, alpha * (1 + r) ** 2


def free_poisson_density(alpha: float, beta: float, u):
    """Absolutely continuous part of the free Poisson law P(alpha, beta); zero off its support."""
    u = np.asarray(u, dtype=float)
    lo, hi = _free_poisson_edges(alpha, beta)
    # equals 4 alpha^2 beta - (u - alpha (1 + beta))^2 without the cancellation
    disc = (u - lo) * (hi - u)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.sqrt(np.maximum(disc, 0.0)) / (2 * math.pi * alpha * u)
    d = np.where((disc > 0) & (u > 0), d, 0.0)
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class Grid(PositiveMeasure):
    """Tabulated density, log-linear between abscissae and zero outside them.

    Segments touching a zero value fall back to linear interpolation.
    """

    u: tuple[float, ...]
    values: tuple[float, ...]
    kind = "grid"

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        d = np.asarray(self.values, dtype=float)
        if u.ndim != 1 or u.shape != d.shape or len(u) < 2:
            raise DomainError("grid needs matching 1-d abscissae and values, at least two points")
        if np.any(np.diff(u) <= 0) or u[0] < 0 or not np.all(np.isfinite(u)):
            raise DomainError("grid abscissae must be nonnegative, finite and strictly increasing")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise DomainError("grid density values must be finite and nonnegative")
        object.__setattr__(self, "u", tuple(u.tolist()))
        object.__setattr__(self, "values", tuple(d.tolist()))

    def support(self):
        return self.u[0], self.u[-1]

    def density(self, x):
        x = np.asarray(x, dtype=float)
        u = np.asarray(self.u)
        d = np.asarray(self.values)
        i = np.clip(np.searchsorted(u, x, side="right") - 1, 0, len(u) - 2)
        t = (x - u[i]) / (u[i + 1] - u[i])
        d0, d1 = d[i], d[i + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            loglin = d0 * np.power(d1 / d0, t)
        out = np.where((d0 > 0) & (d1 > 0), loglin, d0 + t * (d1 - d0))
        out = np.where((x >= u[0]) & (x <= u[-1]), out, 0.0)
        return float(out) if out.ndim == 0 else out

    def _raw_piece(self, f):
        return gauss_legendre_piece(f, np.asarray(self.u))

    def integrate(self, w, lo=None, hi=None, eager=False):
        lo_ = self.u[0] if lo is None else max(lo, self.u[0])
        hi_ = self.u[-1] if hi is None else min(hi, self.u[-1])
        if lo_ > 0 and lo_ < hi_:
            # weights used here are smooth away from 0, so one composite rule suffices
            return self._piece(w)(lo_, hi_)[0]
        return super().integrate(w, lo, hi, eager)

    def _singular_end(self, left: bool) -> float | None:
        """Endpoint the abscissae accumulate at geometrically, if they do."""
        u = np.asarray(self.u)
        if len(u) < 3:
            return None
        x0, x1, x2 = (u[0], u[1], u[2]) if left else (u[-1], u[-2], u[-3])
        r = abs(x0 - x1) / abs(x1 - x2)
        if r >= 0.95:
            return None
        e = x0 - math.copysign(abs(x0 - x1) * r / (1 - r), x1 - x0)
        return max(e, 0.0)

    def _diverges_toward(self, e: float, w: Weight, start: float, stop: float) -> bool:
        """Whether dyadic shells of the distance to ``e`` stop shrinking before reaching ``stop``."""
        piece = self._piece(w)
        far, near = abs(start - e), abs(stop - e)
        sign = 1.0 if start > e else -1.0
        shells = []
        k = 0
        while far * 2.0 ** -(k + 1) > near:
            a, b = e + sign * far * 2.0 ** -(k + 1), e + sign * far * 2.0**-k
            shells.append(piece(min(a, b), max(a, b))[0])
            k += 1
        tail = shells[-DIVERGE_RUN - 1:]
        return len(tail) > DIVERGE_RUN and all(
            v != 0 and abs(nxt) >= DIVERGE_RATIO * abs(v) for v, nxt in zip(tail, tail[1:]))

    def is_thorin(self):
        if not super().is_thorin():
            return False
        # a tabulation that resolves a singularity stands for the measure it approximates
        cut = THORIN_CUTOFF
        for left in (True, False):
            e = self._singular_end(left)
            if e is None:
                continue
            edge = self.u[0] if left else self.u[-1]
            if e <= cut:
                w, start = (lambda x: np.abs(np.log(x))), (min(cut, self.u[-1]) if left else self.u[0])
            else:
                w, start = (lambda x: 1.0 / x), (self.u[-1] if left else max(cut, self.u[0]))
            if start != edge and self._diverges_toward(e, w, start, edge):
                return False
        return True

    def to_json(self):
        return {"kind": self.kind, "u": list(self.u), "density": list(self.values)}


@dataclass(frozen=True)
class PowerTail(PositiveMeasure):
    """Density coef * u^(-power) on (start, inf), power > 0."""

    coef: float
    power: float
    start: float
    kind = "power_tail"

    def __post_init__(self):
        if not (self.coef > 0 and self.power > 0 and self.start > 0):
            raise DomainError("power tail needs positive coef, power and start")

    def support(self):
        return self.start, math.inf

    def density(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            d = np.where(u > self.start, self.coef * np.abs(u) ** -self.power, 0.0)
        return float(d) if d.ndim == 0 else d

    def moment(self, s):
        e = s - self.power + 1
        if e >= 0:
            return math.inf
        return self.coef * self.start**e / -e

    def _hyp(self, w):
        # int_1^inf t^-p / (t + w) dt = 2F1(1, p; p + 1; -w) / p
        p = self.power
        return special.hyp2f1(1.0, p, p + 1.0, -w) / p

    def resolvent(self, lam):
        if self.power <= 1 and lam == 0:
            return self.moment(-1.0)
        return float(self.coef * self.start**-self.power * self._hyp(lam / self.start).real)

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        out = -self.coef * self.start**-self.power * self._hyp(-arr / self.start)
        return _out(np.asarray(out, dtype=complex), scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        p, u0 = self.power, self.start
        out = -self.coef * u0 ** (-p - 1) * special.hyp2f1(2.0, p + 1.0, p + 2.0, arr / u0) / (p + 1.0)
        return _out(np.asarray(out, dtype=complex), scalar)

    def is_thorin(self):
        return True

    def to_json(self):
        return {"kind": self.kind, "coef": self.coef, "power": self.power, "start": self.start}


@dataclass(frozen=True)
class Sum(PositiveMeasure):
    """Positive linear combination sum_j c_j * m_j."""

    parts: tuple[tuple[float, PositiveMeasure], ...]
    kind = "sum"

    def __post_init__(self):
        flat: list[tuple[float, PositiveMeasure]] = []
        for c, m in self.parts:
            if not c > 0:
                raise DomainError("sum coefficients must be positive")
            if isinstance(m, Sum):
                flat.extend((c * c2, m2) for c2, m2 in m.parts)
            elif not m.is_zero:
                flat.append((float(c), m))
        object.__setattr__(self, "parts", tuple(flat))

    @property
    def is_zero(self):
        return not self.parts

    @property
    def is_atomic(self):
        return all(m.is_atomic for _, m in self.parts)

    def support(self):
        if self.is_zero:
            return math.inf, -math.inf
        sup = [m.support() for _, m in self.parts]
        return min(s[0] for s in sup), max(s[1] for s in sup)

    def density(self, u):
        """Density of the absolutely continuous part; atoms are left out."""
        parts = [(c, m) for c, m in self.parts if not m.is_atomic]
        if not parts:
            raise NotImplementedError("a purely atomic sum has no density")
        return sum(c * m.density(u) for c, m in parts)

    def _combine(self, fn) -> float:
        return math.fsum(c * fn(m) for c, m in self.parts)

    def integrate(self, w, lo=None, hi=None, eager=False):
        return self._combine(lambda m: m.integrate(w, lo, hi, eager))

    def moment(self, s):
        return self._combine(lambda m: m.moment(s))

    def resolvent(self, lam):
        return self._combine(lambda m: m.resolvent(lam))

    def laplace(self, y, k=0):
        return self._combine(lambda m: m.laplace(y, k))

    def log_integral(self, lam):
        return self._combine(lambda m: m.log_integral(lam))

    def stieltjes(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        out = sum(c * np.asarray(m.stieltjes(arr)) for c, m in self.parts)
        return _out(np.asarray(out, dtype=complex), scalar)

    def stieltjes_derivative(self, z):
        arr, scalar = _as_complex(z)
        self._check_domain(arr)
        out = sum(c * np.asarray(m.stieltjes_derivative(arr)) for c, m in self.parts)
        return _out(np.asarray(out, dtype=complex), scalar)

    def is_thorin(self):
        return all(m.is_thorin() for _, m in self.parts)

    def scaled(self, c):
        return Sum(tuple((c * c2, m) for c2, m in self.parts))

    def to_json(self):
        return {"kind": self.kind, "parts": [[c, m.to_json()] for c, m in self.parts]}


@dataclass(frozen=True)
class ThorinPair:
    """Translation term q >= 0 and Thorin measure m."""

    q: float
    m: PositiveMeasure

    def __post_init__(self):
        if not (self.q >= 0 and math.isfinite(self.q)):
            raise DomainError("q must be a nonnegative real")
        if not is_thorin(self.m):
            raise DomainError("m violates the Thorin integrability condition")

    def to_json(self) -> dict:
        return {"q": self.q, "m": self.m.to_json()}


# module-level operations --------------------------------------------------------------


def moment(m: PositiveMeasure, s: float) -> float:
    return m.moment(s)


def is_thorin(m: PositiveMeasure) -> bool:
    """Whether int_(0,1/2] |log u| m(du) and int_(1/2,inf) m(du)/u are both finite.

    Raises InconclusiveError when quadrature cannot decide.
    """
    if m.is_zero:
        return True
    return m.is_thorin()


def stieltjes(m: PositiveMeasure, z):
    return m.stieltjes(z)


def thorin_phi(m: PositiveMeasure, y: float) -> float:
    """phi(y) = int exp(-u y) m(du)."""
    if m.is_zero:
        return 0.0
    return m.laplace(y, 0)


def thorin_phi_prime(m: PositiveMeasure, y: float) -> float:
    if m.is_zero:
        return 0.0
    return -m.laplace(y, 1)


def levy_density(p: ThorinPair, y: float) -> float:
    """Density phi(y)/y of the Levy measure of the GGC with pair p."""
    if not y > 0:
        raise DomainError("y must be positive")
    return thorin_phi(p.m, y) / y


def laplace_exponent(p: ThorinPair, lam: float, cross_check: bool = True, rtol: float = 1e-6) -> float:
    """Phi(lam) = q lam + int log(1 + lam/u) m(du).

    With ``cross_check`` the value is compared against the Levy-measure route
    q lam + int (1 - exp(-lam y)) phi(y)/y dy.
    """
    if lam < 0:
        raise DomainError("lam must be nonnegative")
    if lam == 0:
        return 0.0
    value = p.q * lam + (0.0 if p.m.is_zero else p.m.log_integral(lam))
    if cross_check and not p.m.is_zero:
        other = p.q * lam + _levy_route(p.m, lam)
        if abs(other - value) > rtol * max(abs(value), 1e-300):
            raise ConsistencyError(f"Laplace exponent routes disagree: {value!r} vs {other!r}")
    return value


def _levy_route(m: PositiveMeasure, lam: float) -> float:
    def f(y):
        return -math.expm1(-lam * y) / y * thorin_phi(m, y)

    lo = m.support()[0]
    split = 1.0 / max(lo, lam, 1e-3)
    return integrate_shells(quad_piece(f), 0.0, math.inf, split=split)


# JSON -----------------------------------------------------------------------------------


def measure_from_json(obj: dict) -> PositiveMeasure:
    try:
        kind = obj["kind"]
        if kind == "atomic":
            return Atomic.from_pairs((g, x) for g, x in obj["atoms"])
        if kind == "stable_tail":
            return StableTail(float(obj["alpha"]), float(obj.get("kappa", 0.0)))
        if kind == "stable_tail_dual":
            return StableTailDual(float(obj["alpha"]), float(obj.get("kappa", 0.0)))
        if kind == "window":
            return Window(float(obj["lo"]), float(obj["hi"]))
        if kind == "free_poisson":
            return FreePoissonScaled(float(obj.get("scale", 1.0)), float(obj["alpha"]), float(obj["beta"]))
        if kind == "grid":
            return Grid(tuple(obj["u"]), tuple(obj["density"]))
        if kind == "power_tail":
            return PowerTail(float(obj["coef"]), float(obj["power"]), float(obj["start"]))
        if kind == "sum":
            return Sum(tuple((float(c), measure_from_json(m)) for c, m in obj["parts"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed measure: {exc}") from exc
    raise DomainError(f"unknown measure kind {kind!r}")


def pair_from_json(obj: dict) -> ThorinPair:
    try:
        return ThorinPair(float(obj.get("q", 0.0)), measure_from_json(obj["m"]))
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed Thorin pair: {exc}") from exc
