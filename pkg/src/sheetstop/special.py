"""Scalar special functions and solvers: exponential integral E1,
semi-infinite adaptive quadrature, and bracketed root finding.

These are the analytic primitives behind the integrated-functional value
curve and its threshold equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BracketError, ConfigurationError, ConvergenceError, DomainError

__all__ = [
    "QuadratureConfig",
    "RootConfig",
    "exp_integral_e1",
    "integrate_semi_infinite",
    "solve_bracketed",
]

_EULER_GAMMA = 0.5772156649015328606


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 10_000

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigurationError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ConfigurationError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class RootConfig:
    bracket: tuple[float, float]
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo < hi:
            raise ConfigurationError("bracket must satisfy lo < hi")
        if self.tol <= 0:
            raise ConfigurationError("root tolerance must be positive")


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf exp(-s)/s ds for x > 0.

    Power series below the switch point, modified-Lentz continued fraction
    above it; both branches carry full double accuracy on (1e-3, 1e2) and
    degrade gracefully outside.
    """
    if not x > 0:
        raise DomainError(f"exp_integral_e1 requires x > 0, got {x!r}")
    if x <= 1.0:
        return _e1_series(x)
    return _e1_continued_fraction(x)


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k * k!)
    total = -_EULER_GAMMA - math.log(x)
    term = 1.0
    for k in range(1, 60):
        term *= -x / k
        delta = -term / k
        total += delta
        if abs(delta) < 1e-18 * max(abs(total), 1e-300):
            break
    return total


def _e1_continued_fraction(x: float) -> float:
    # E1(x) = exp(-x) / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))
    # evaluated with the modified Lentz algorithm.
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for k in range(1, 200):
        a = -(k * k)
        b += 2.0
        d = 1.0 / (b + a * d) if abs(b + a * d) > tiny else 1.0 / tiny
        c = b + a / c if abs(b + a / c) > tiny else tiny
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x) * h


def integrate_semi_infinite(
    f: Callable[[float], float],
    lower: float,
    cfg: QuadratureConfig = QuadratureConfig(),
) -> float:
    """Integrate f over [lower, inf) for integrands with eventually
    monotone decay.

    Geometrically widening panels, each resolved by adaptive Simpson
    subdivision; the tail is truncated once the integrand bound and the
    panel contribution both drop below abs_tol / 10.
    """
    budget = [cfg.max_subdivisions]
    total = 0.0
    a = lower
    width = max(1.0, abs(lower))
    quiet_panels = 0
    for _ in range(200):
        b = a + width
        try:
            panel = _adaptive_simpson(f, a, b, cfg.abs_tol / 8.0, budget)
        except ConvergenceError as err:
            best = total + (err.best_estimate or 0.0)
            raise ConvergenceError(
                "quadrature subdivision budget exhausted", best_estimate=best
            ) from None
        total += panel
        bound = max(abs(f(a)), abs(f(b))) * width
        if bound < cfg.abs_tol / 10.0 and abs(panel) < cfg.abs_tol / 10.0:
            quiet_panels += 1
            if quiet_panels >= 2:
                return total
        else:
            quiet_panels = 0
        a = b
        width *= 2.0
    raise ConvergenceError(
        "integrand did not decay below tolerance", best_estimate=total
    )


def _adaptive_simpson(f, a, b, tol, budget) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_step(f, a, b, fa, fb, fm, whole, tol, budget)


def _simpson_step(f, a, b, fa, fb, fm, whole, tol, budget) -> float:
    if budget[0] <= 0:
        raise ConvergenceError("subdivision budget exhausted", best_estimate=whole)
    budget[0] -= 1
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol or (b - a) < 1e-14 * max(abs(a), 1.0):
        return left + right + delta / 15.0
    half = tol / 2.0
    return _simpson_step(f, a, m, fa, fm, flm, left, half, budget) + _simpson_step(
        f, m, b, fm, fb, frm, right, half, budget
    )


def solve_bracketed(g: Callable[[float], float], cfg: RootConfig) -> float:
    """Find a root of g inside cfg.bracket.

    Bisection with a secant step whenever the secant candidate falls
    strictly inside the current bracket; safe for any continuous g with a
    sign change on the bracket.
    """
    lo, hi = cfg.bracket
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0:
        raise BracketError(f"no sign change on bracket ({lo}, {hi})")
    for _ in range(cfg.max_iter):
        # Secant candidate, falling back to the midpoint when degenerate.
        denom = ghi - glo
        x = hi - ghi * (hi - lo) / denom if denom != 0 else 0.5 * (lo + hi)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        gx = g(x)
        if gx == 0.0 or (abs(gx) <= cfg.tol and hi - lo <= cfg.tol):
            return x
        if glo * gx < 0:
            hi, ghi = x, gx
        else:
            lo, glo = x, gx
        if hi - lo <= cfg.tol:
            x = 0.5 * (lo + hi)
            if abs(g(x)) <= cfg.tol:
                return x
            # Bracket collapsed but |g| still large: keep halving via
            # midpoints until max_iter runs out.
    raise ConvergenceError(
        "root iteration budget exhausted", best_estimate=0.5 * (lo + hi)
    )
