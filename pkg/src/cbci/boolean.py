"""Boolean convolution of probability Thorin measures through the quadruplet correspondence.

For a probability measure m, K_m(z) = z - 1/G_m(z).  With q = 0 and total mass 1 the paired
quadruplet has a = 1, and K_m(z) = b + z G_M(z), so Boolean convolution adds (b, M) while
keeping a = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correspondence import backward, forward
from .errors import DomainError
from .measures import (
    ZERO,
    FreePoissonScaled,
    PositiveMeasure,
    StableTail,
    StableTailDual,
    ThorinPair,
    free_poisson_density,
)

__all__ = [
    "TEST_POINTS", "FreePoissonParams", "boolean_cumulant", "boolean_convolve", "boolean_power",
    "free_poisson_density", "fixed_point_measure", "fixed_point_residual", "k_additivity_residual",
]

MASS_TOL = 1e-12
TEST_POINTS = np.array([r * np.exp(1j * t) for r in (1.0, 2.0, 5.0, 10.0)
                        for t in (math.pi / 3, math.pi / 2, 2 * math.pi / 3, math.pi, 4 * math.pi / 3)])


@dataclass(frozen=True)
class FreePoissonParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta >= 0):
            raise DomainError("need alpha > 0 and beta >= 0")

    @property
    def support(self) -> tuple[float, float]:
        r = math.sqrt(self.beta)
        return self.alpha * (1 - r) ** 2, self.alpha * (1 + r) ** 2

    @property
    def is_thorin(self) -> bool:
        return self.beta >= 1

    def density(self, u):
        return free_poisson_density(self.alpha, self.beta, u)


def _check_probability(m: PositiveMeasure) -> None:
    mass = m.total_mass()
    if not abs(mass - 1.0) <= MASS_TOL:
        raise DomainError(f"Boolean operations need a probability measure (mass {mass!r})")


def boolean_cumulant(m: PositiveMeasure, z):
    """K_m(z) = z - 1/G_m(z)."""
    _check_probability(m)
    z = np.asarray(z, dtype=complex)
    out = z - 1.0 / np.asarray(m.stieltjes(z))
    return complex(out) if out.ndim == 0 else out


def _to_quad(m: PositiveMeasure) -> tuple[float, PositiveMeasure]:
    _check_probability(m)
    res = forward(ThorinPair(0.0, m))
    if not math.isclose(res.a, 1.0, rel_tol=1e-12):
        raise DomainError(f"expected a = 1 for a probability measure, got {res.a!r}")
    return res.b, res.M


def _add(M1: PositiveMeasure, M2: PositiveMeasure) -> PositiveMeasure:
    if M1.is_zero:
        return M2
    if M2.is_zero:
        return M1
    return M1 + M2


def boolean_convolve(m1: PositiveMeasure, m2: PositiveMeasure) -> PositiveMeasure:
    """m1 Boolean-convolved with m2, via backward(1, b1 + b2, M1 + M2)."""
    b1, M1 = _to_quad(m1)
    b2, M2 = _to_quad(m2)
    return backward(1.0, b1 + b2, _add(M1, M2)).m


def boolean_power(m: PositiveMeasure, t: float) -> PositiveMeasure:
    """The t-th Boolean convolution power, via backward(1, t b, t M)."""
    if not (t > 0 and math.isfinite(t)):
        raise DomainError("t must be positive")
    if t == 1.0:
        _check_probability(m)
        return m
    b, M = _to_quad(m)
    return backward(1.0, t * b, ZERO if M.is_zero else M.scaled(t)).m


def k_additivity_residual(m1: PositiveMeasure, m2: PositiveMeasure, m12: PositiveMeasure, z=TEST_POINTS) -> float:
    """max |K_{m12} - K_{m1} - K_{m2}| over the test points."""
    k = boolean_cumulant(m12, z) - boolean_cumulant(m1, z) - boolean_cumulant(m2, z)
    return float(np.max(np.abs(k)))


def fixed_point_measure(q: float, a: float, b: float) -> ThorinPair:
    """The pair (q, m) whose quadruplet is (a, b, m) itself.

    With a + q > 0 this is a scaled free Poisson law; with a = q = 0 it is the infinite measure
    sqrt(u - (b/2)^2) / (pi u) du on ((b/2)^2, inf).
    """
    if min(q, a, b) < 0 or not all(math.isfinite(v) for v in (q, a, b)):
        raise DomainError("q, a and b must be nonnegative reals")
    if q > 0 and a > 0:
        raise DomainError("q > 0 forces a = 0")
    if a + q > 0:
        gap = 1.0 - b * q
        if not gap > 0:
            raise DomainError("need 1 - b q > 0")
        alpha = gap / (a + q) ** 2
        beta = (1.0 + a * b) / gap
        return ThorinPair(q, FreePoissonScaled(gap / (a + q), alpha, beta))
    if b == 0:
        return ThorinPair(0.0, StableTail(0.5, 0.0))
    return ThorinPair(0.0, StableTailDual(0.5, (b / 2) ** 2))


def fixed_point_density(q: float, a: float, b: float, u):
    return fixed_point_measure(q, a, b).m.density(u)


def fixed_point_residual(q: float, a: float, b: float, z=TEST_POINTS) -> float:
    """max |G(z) - q - 1/(a z - b - z G(z))| for the fixed-point measure G = G_m."""
    m = fixed_point_measure(q, a, b).m
    z = np.asarray(z, dtype=complex)
    G = np.asarray(m.stieltjes(z))
    return float(np.max(np.abs(G - q - 1.0 / (a * z - b - z * G))))
