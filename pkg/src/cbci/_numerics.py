"""Quadrature with dyadic-shell divergence detection, and small numeric helpers."""
from __future__ import annotations

import math
import warnings
from collections.abc import Callable

import numpy as np
from scipy import integrate as _si

from .errors import InconclusiveError

RTOL = 1e-10
DIVERGE_RATIO = 0.99
DIVERGE_RUN = 10
_MIN_SHELLS_FOR_DIVERGENCE = 40
_NEGLIGIBLE = 1e-16

Piece = Callable[[float, float], tuple[float, float]]


def quad(f, a: float, b: float, rtol: float = 1e-11, atol: float = 0.0, points=None) -> tuple[float, float]:
    """scipy ``quad`` with warnings silenced; caller inspects the error estimate."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _si.IntegrationWarning)
        return _si.quad(f, a, b, epsabs=atol, epsrel=rtol, limit=200, points=points)


def quad_piece(f) -> Piece:
    return lambda x0, x1: quad(f, x0, x1)


def _toward(piece: Piece, start: float, end: float, eager: bool) -> tuple[float, float]:
    """Sum ``piece`` over dyadic shells from ``start`` toward ``end`` (finite or +inf).

    Returns (value, error). The value is +-inf when the shell contributions stop shrinking:
    with ``eager`` any run of DIVERGE_RUN non-shrinking shells toward a finite endpoint counts,
    otherwise the run has to last until the shells reach floating-point resolution.
    """
    total, err = 0.0, 0.0
    shells: list[float] = []
    streak = 0
    k = 0
    while True:
        if math.isinf(end):
            x0, x1 = start * 2.0**k, start * 2.0 ** (k + 1)
            if math.isinf(x1):
                break
        else:
            d = end - start
            x0, x1 = end - d * 2.0**-k, end - d * 2.0 ** -(k + 1)
            if x0 == x1 or abs(d) * 2.0 ** -(k + 1) < 4 * math.ulp(max(abs(end), 1e-300)):
                break
        s, e = piece(min(x0, x1), max(x0, x1))
        total += s
        err += e
        if shells and shells[-1] != 0.0 and abs(s) >= DIVERGE_RATIO * abs(shells[-1]):
            streak += 1
        else:
            streak = 0
        shells.append(s)
        # toward infinity a weight like exp(-u y) can grow for many shells before it decays
        if streak >= DIVERGE_RUN and ((eager and math.isfinite(end)) or k >= _MIN_SHELLS_FOR_DIVERGENCE):
            return math.copysign(math.inf, total), err
        if k >= 3 and all(abs(v) <= _NEGLIGIBLE * abs(total) for v in shells[-2:]):
            return total, err
        if k >= 3 and total == 0.0 and shells[-1] == 0.0 and shells[-2] == 0.0:
            return total, err
        k += 1
    # ran out of floating-point resolution before deciding
    if streak >= DIVERGE_RUN:
        return math.copysign(math.inf, total), err
    if len(shells) >= 2 and shells[-2] != 0.0:
        r = abs(shells[-1] / shells[-2])
        if r < DIVERGE_RATIO:
            tail = shells[-1] * r / (1.0 - r)
            return total + tail, err
    if shells and abs(shells[-1]) <= 1e-12 * max(abs(total), 1e-300):
        return total, err
    raise InconclusiveError(f"shell series toward {end} undecided (last ratio streak {streak})")


def integrate_shells(piece: Piece, lo: float, hi: float, split: float | None = None, eager: bool = False) -> float:
    """Integrate over (lo, hi) by dyadic shells toward both endpoints.

    ``piece(x0, x1)`` returns (value, error) on a subinterval. Returns +-inf on detected
    divergence and raises InconclusiveError when the error estimate is not controlled.
    """
    if not lo < hi:
        return 0.0
    if split is None:
        split = 0.5 * (lo + hi) if math.isfinite(hi) else max(2.0 * lo, lo + 1.0)
    left, e1 = _toward(piece, split, lo, eager)
    right, e2 = _toward(piece, split, hi, eager)
    value = left + right
    if math.isnan(value):
        raise InconclusiveError("opposite-sign divergences at both endpoints")
    scale = abs(left) + abs(right)
    if math.isfinite(value) and e1 + e2 > 1e-8 * abs(value) + 1e-12 * scale + 1e-300:
        raise InconclusiveError(f"quadrature error {e1 + e2:.3g} too large for value {value:.6g}")
    return value


def integrate(f, lo: float, hi: float, split: float | None = None, eager: bool = False) -> float:
    return integrate_shells(quad_piece(f), lo, hi, split, eager)


def gauss_legendre_piece(f, breakpoints: np.ndarray, order: int = 16) -> Piece:
    """Composite Gauss-Legendre over the breakpoints that fall inside each requested piece.

    ``f`` must accept numpy arrays.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    bp = np.asarray(breakpoints, dtype=float)

    def piece(x0: float, x1: float) -> tuple[float, float]:
        inner = bp[(bp > x0) & (bp < x1)]
        edges = np.concatenate(([x0], inner, [x1]))
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        u = mid[:, None] + half[:, None] * nodes[None, :]
        vals = f(u) * weights[None, :] * half[:, None]
        return float(vals.sum()), 0.0

    return piece


def neville_at_zero(ys, fs):
    """Value at y = 0 of the interpolating polynomial through (ys, fs).

    Also returns the change from the lower-degree estimate on the finest points.
    """
    ys = [float(y) for y in ys]
    p = list(fs)
    n = len(ys)
    before = p[-1]
    for m in range(1, n):
        before = p[-1]
        p = [(ys[i] * p[i + 1] - ys[i + m] * p[i]) / (ys[i] - ys[i + m]) for i in range(n - m)]
    return p[0], p[0] - before
