"""Closed-form value functions, thresholds, and one-parameter baselines.

Everything here is simulation-free: hitting values come from the Laplace
transform of the stopping product, the integrated value curve from its
exponential-integral representation, and thresholds from the associated
first-order conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .special import RootConfig, exp_integral_e1, solve_bracketed

__all__ = [
    "DiscountConfig",
    "Reward",
    "ValueCurve",
    "hitting_value",
    "hitting_threshold",
    "integrated_value",
    "integrated_threshold",
    "threshold_root",
    "baseline_levels",
    "sample_curve",
]


@dataclass(frozen=True)
class DiscountConfig:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError("discount rate rho must be positive")

    @property
    def rate(self) -> float:
        """sqrt(2 rho), the exponential decay rate of the hitting value."""
        return math.sqrt(2.0 * self.rho)


@dataclass(frozen=True)
class Reward:
    """Nonnegative C^1 reward on the positive half-line.

    kind 'linear' is h(y) = y, 'power' is h(y) = y^n; 'custom' wraps a
    callable with its derivative.
    """

    kind: str
    power: int | None = None
    fn: Callable[[float], float] | None = None
    dfn: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind == "power":
            if self.power is None or self.power < 1:
                raise ConfigurationError("power rewards need an integer exponent >= 1")
        elif self.kind == "custom":
            if self.fn is None or self.dfn is None:
                raise ConfigurationError("custom rewards need fn and dfn")
        elif self.kind != "linear":
            raise ConfigurationError(f"unknown reward kind {self.kind!r}")

    @staticmethod
    def linear() -> "Reward":
        return Reward(kind="linear")

    @staticmethod
    def of_power(n: int) -> "Reward":
        return Reward(kind="power", power=n)

    @staticmethod
    def custom(fn: Callable[[float], float], dfn: Callable[[float], float]) -> "Reward":
        return Reward(kind="custom", fn=fn, dfn=dfn)

    def value(self, y: float) -> float:
        if self.kind == "linear":
            return y
        if self.kind == "power":
            return y**self.power
        return float(self.fn(y))

    def derivative(self, y: float) -> float:
        if self.kind == "linear":
            return 1.0
        if self.kind == "power":
            return self.power * y ** (self.power - 1)
        return float(self.dfn(y))

    def label(self) -> str:
        if self.kind == "power":
            return f"power:{self.power}"
        return self.kind


@dataclass(frozen=True)
class ValueCurve:
    ys: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if ys.shape != values.shape or ys.ndim != 1:
            raise ConfigurationError("curve arrays must be equal-length vectors")
        if ys.size > 1 and not np.all(np.diff(ys) > 0):
            raise ConfigurationError("curve levels must be strictly increasing")
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "values", values)


def hitting_value(cfg: DiscountConfig, reward: Reward, y: float) -> float:
    """Expected discounted reward of stopping at the first hit of level
    y > 0: h(y) * exp(-sqrt(2 rho) * y)."""
    if not y > 0:
        raise DomainError("hitting value is defined for levels y > 0")
    return reward.value(y) * math.exp(-cfg.rate * y)


def hitting_threshold(
    cfg: DiscountConfig,
    reward: Reward,
    bracket_scale: tuple[float, float] = (1e-6, 1e3),
) -> float | None:
    """Level maximizing the hitting value, or None when no maximizer
    exists (e.g. exponential rewards outgrow the discount).

    Solves h'(y) = sqrt(2 rho) h(y): exactly 1/sqrt(2 rho) for linear
    rewards and n/sqrt(2 rho) for power rewards; custom rewards are
    solved on a bracket scaled by 1/sqrt(2 rho).
    """
    rate = cfg.rate
    if reward.kind == "linear":
        return 1.0 / rate
    if reward.kind == "power":
        return reward.power / rate
    g = lambda y: reward.derivative(y) - rate * reward.value(y)
    lo = bracket_scale[0] / rate
    hi = bracket_scale[1] / rate
    # Scan a log grid for a sign change before committing to a bracket;
    # points where the reward overflows cannot bracket a root and are
    # skipped (rewards that outgrow the discount have no maximizer).
    grid, vals = [], []
    for y in np.geomspace(lo, hi, 257):
        try:
            v = g(float(y))
        except OverflowError:
            continue
        if math.isfinite(v):
            grid.append(float(y))
            vals.append(v)
    signs = np.sign(vals)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    if flips.size == 0:
        return None
    i = int(flips[0])
    return solve_bracketed(g, RootConfig(bracket=(grid[i], grid[i + 1]), tol=1e-12))


def integrated_value(cfg: DiscountConfig, y: float) -> float:
    """Value of the integrated discounted field stopped at the first hit
    of level y: (2y/rho) E1(|y| sqrt(2 rho)), odd in y, zero at y = 0."""
    if y == 0.0:
        return 0.0
    return (2.0 * y / cfg.rho) * exp_integral_e1(abs(y) * cfg.rate)


def threshold_root(tol: float = 1e-10) -> float:
    """Unique positive solution of E1(z) = exp(-z)."""
    return solve_bracketed(
        lambda z: exp_integral_e1(z) - math.exp(-z),
        RootConfig(bracket=(0.1, 1.0), tol=tol),
    )


def integrated_threshold(cfg: DiscountConfig, tol: float = 1e-10) -> float:
    """Level maximizing the integrated value: threshold_root()/sqrt(2 rho)."""
    return threshold_root(tol) / cfg.rate


def baseline_levels(cfg: DiscountConfig) -> tuple[float, float]:
    """One-parameter optimal levels: +1/sqrt(2 rho) for the discounted
    endpoint problem and -1/sqrt(2 rho) for the integrated one.

    The two-parameter integrated threshold is positive, so the sign of
    the optimal level flips between the one- and two-parameter settings.
    """
    level = 1.0 / cfg.rate
    return level, -level


_CURVES = ("hitting", "integrated", "baseline")


def sample_curve(
    which: str,
    cfg: DiscountConfig,
    ys: Sequence[float],
    reward: Reward | None = None,
) -> ValueCurve:
    """Sample a named closed-form curve on a strictly increasing grid.

    'hitting' needs a reward and positive levels; 'integrated' is the
    two-parameter integrated value; 'baseline' is the one-parameter
    discounted hitting value y*exp(-sqrt(2 rho)|y|).
    """
    if which not in _CURVES:
        raise ConfigurationError(f"unknown curve {which!r}; expected one of {_CURVES}")
    ys_arr = np.asarray(list(ys), dtype=float)
    if which == "hitting":
        if reward is None:
            raise ConfigurationError("hitting curve requires a reward")
        values = np.array([hitting_value(cfg, reward, y) for y in ys_arr])
    elif which == "integrated":
        values = np.array([integrated_value(cfg, y) for y in ys_arr])
    else:
        values = ys_arr * np.exp(-cfg.rate * np.abs(ys_arr))
    return ValueCurve(ys=ys_arr, values=values, label=which)
