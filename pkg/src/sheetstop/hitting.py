"""First-hitting-point rules on simulated sheets.

Restricted to a monotone search path (a fixed-height horizontal line or a
ray through the origin), the sheet is a continuous martingale whose
quadratic-variation clock is u(t) = t * x(t).  Hitting a level along the
path therefore reduces to a one-parameter first passage in the clock, and
the product tau1 * tau2 equals the clock at the hit.  The samplers below
draw path values at lattice nodes exactly in law and detect the first
crossing of a level.

Crossing detection supports two modes:

* ``bridge`` (default): between consecutive nodes the crossing event is
  resolved exactly via the Brownian-bridge maximum law, so excursions
  above the level that return within one step are never missed.  The
  reported node is the one closing the crossing step, giving a one-sided
  clock error below one step.
* ``sign``: a pure sign change of (value - level) between nodes.  Cheaper
  but systematically late by O(sqrt(step)); kept for comparison runs.

Negative levels are handled by negating the field, which leaves the sheet
law invariant.

Increments are drawn in fixed 256-node units (fully drawn even when the
budget truncates the scan), so the value at lattice node k is the same
for every budget and every scan batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numba
import numpy as np

from .errors import ConfigurationError

__all__ = [
    "HittingRule",
    "StoppingPoint",
    "ReplicationHandle",
    "first_hit",
    "hit_independence_check",
    "default_budget",
    "rep_generators",
]

# Clock budget ensuring the censored probability of a level-y search stays
# below 1% including sampling noise at n ~ 2e4: P(no hit by C) =
# erf(y/sqrt(2C)) = 0.67% at C = 14000 y^2, leaving 3+ binomial sigmas.
CENSOR_CLOCK_PER_LEVEL_SQ = 14_000.0

# Discarded discount mass exp(-beta^2/2 * 50/beta^2) = exp(-25) < 1e-10.
BIAS_CLOCK_SCALE = 50.0

_UNIT = 256
_MAX_UNITS = 32


def default_budget(beta: float, level: float) -> float:
    """Clock budget making both the discount-truncation mass and the
    censored fraction negligible for a level-`level` search discounted at
    exp(-beta^2/2 * clock)."""
    bias_cap = BIAS_CLOCK_SCALE / (beta * beta) if beta > 0 else BIAS_CLOCK_SCALE
    censor_cap = CENSOR_CLOCK_PER_LEVEL_SQ * level * level
    return max(bias_cap, censor_cap, 1.0)


def rep_generators(
    seed: int, substream: int
) -> tuple[np.random.Generator, np.random.Generator]:
    """Two independent deterministic streams for one replication.

    Both use the same Philox key (seed, substream) but disjoint 2^128
    counter blocks: block 0 feeds Gaussian increments (shared with sheet
    generation), block 1 feeds auxiliary uniforms for bridge crossing
    events.  Separate blocks keep the increment stream independent of the
    detection mode.
    """
    key = np.array(
        [np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(substream & 0xFFFFFFFFFFFFFFFF)]
    )
    zero = np.zeros(4, dtype=np.uint64)
    aux = np.array([0, 0, 1, 0], dtype=np.uint64)
    gn = np.random.Generator(np.random.Philox(key=key, counter=zero))
    gu = np.random.Generator(np.random.Philox(key=key, counter=aux))
    return gn, gu


@dataclass(frozen=True)
class HittingRule:
    """Search-path rule: ``axis`` walks t -> (t, x0), ``diagonal`` walks
    t -> (t, c*t).  Both define adapted stopping points.

    budget caps tau1*tau2 before censoring (None: derived per estimator).
    hit_tol widens node detection to |value - level| <= hit_tol.
    """

    kind: Literal["axis", "diagonal"]
    x0: float | None = None
    c: float | None = None
    budget: float | None = None
    hit_tol: float = 0.0
    crossing: Literal["bridge", "sign"] = "bridge"

    def __post_init__(self):
        if self.kind == "axis":
            if self.x0 is None or not self.x0 > 0:
                raise ConfigurationError("axis rule requires x0 > 0")
        elif self.kind == "diagonal":
            if self.c is None or not self.c > 0:
                raise ConfigurationError("diagonal rule requires c > 0")
        else:
            raise ConfigurationError(f"unknown rule kind {self.kind!r}")
        if self.budget is not None and not self.budget > 0:
            raise ConfigurationError("budget must be positive")
        if self.hit_tol < 0:
            raise ConfigurationError("hit_tol must be nonnegative")
        if self.crossing not in ("bridge", "sign"):
            raise ConfigurationError(f"unknown crossing mode {self.crossing!r}")

    @staticmethod
    def axis(x0: float, **kw) -> "HittingRule":
        return HittingRule(kind="axis", x0=x0, **kw)

    @staticmethod
    def diagonal(c: float, **kw) -> "HittingRule":
        return HittingRule(kind="diagonal", c=c, **kw)

    @staticmethod
    def parse(text: str, **kw) -> "HittingRule":
        """Parse 'axis:X0' or 'diagonal:C'."""
        kind, _, arg = text.partition(":")
        try:
            value = float(arg)
        except ValueError:
            raise ConfigurationError(f"bad rule parameter in {text!r}") from None
        if kind == "axis":
            return HittingRule.axis(value, **kw)
        if kind == "diagonal":
            return HittingRule.diagonal(value, **kw)
        raise ConfigurationError(f"unknown rule kind in {text!r}")

    def label(self) -> str:
        if self.kind == "axis":
            return f"axis:{self.x0:g}"
        return f"diagonal:{self.c:g}"

    def point_at(self, t: float) -> tuple[float, float]:
        """Map a path parameter to the stopping point (tau1, tau2)."""
        if self.kind == "axis":
            return t, float(self.x0)
        return t, float(self.c) * t

    def clock_to_point(self, clock: float) -> tuple[float, float]:
        """Map a clock value u = tau1*tau2 back to the path point."""
        if self.kind == "axis":
            return clock / self.x0, float(self.x0)
        t = math.sqrt(clock / self.c)
        return t, float(self.c) * t


@dataclass(frozen=True)
class StoppingPoint:
    tau1: float
    tau2: float
    level: float
    censored: bool

    @property
    def clock(self) -> float:
        return self.tau1 * self.tau2


@dataclass(frozen=True)
class ReplicationHandle:
    """One replication's view of the sheet along a search path.

    dt is the lattice step along the path parameter t; the horizon grows
    on demand until the rule's budget is exhausted.  negate flips every
    increment (antithetic variate).
    """

    seed: int
    substream: int
    dt: float
    negate: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")


def _fine_node_count(rule: HittingRule, dt: float, clock_cap: float) -> int:
    """Number of uniform-lattice path nodes with clock <= clock_cap."""
    if rule.kind == "axis":
        return int(math.floor(clock_cap / (rule.x0 * dt) + 1e-12))
    return int(math.floor(math.sqrt(clock_cap / rule.c) / dt + 1e-12))


@numba.njit(cache=True)
def _walk_chunk(
    z: np.ndarray,
    u: np.ndarray,
    m_valid: int,
    out_vals: np.ndarray,
    prev_value: float,
    k_start: int,
    dt: float,
    coef: float,
    is_axis: bool,
    target: float,
    hit_tol: float,
    use_bridge: bool,
    zsign: float,
) -> tuple[int, float, float]:
    """Sequentially extend the oriented path through one chunk and report
    the first node where the level is reached.

    Returns (local index or -1, value, clock) at the hit node or at the
    chunk end.  out_vals receives every examined node value so callers can
    keep the path.  The accumulation order matches a plain cumulative sum,
    so results are independent of how nodes are batched into chunks.
    """
    v = prev_value
    clock = 0.0
    const_delta = coef * dt  # axis clock step
    if is_axis:
        clock = (k_start - 1) * const_delta
    else:
        t_prev = (k_start - 1) * dt
        clock = coef * t_prev * t_prev
    for i in range(m_valid):
        k = k_start + i
        if is_axis:
            new_clock = k * const_delta
            delta = const_delta
        else:
            t = k * dt
            new_clock = coef * t * t
            delta = new_clock - clock
        v_new = v + zsign * z[i] * math.sqrt(delta)
        out_vals[i] = v_new
        hit = v_new >= target - hit_tol
        if (not hit) and use_bridge:
            gap_prev = target - v
            gap_here = target - v_new
            # Crossing probabilities below 1e-12 are treated as zero; the
            # cheap product test skips the exp on almost every step.
            if gap_prev > 0.0 and gap_here > 0.0 and gap_prev * gap_here < 13.9 * delta:
                if u[i] < math.exp(-2.0 * gap_prev * gap_here / delta):
                    hit = True
        if hit:
            return i, v_new, new_clock
        v = v_new
        clock = new_clock
    return -1, v, clock


def _scan_values(
    values: np.ndarray,
    prev: float,
    deltas: np.ndarray,
    target: float,
    hit_tol: float,
    crossing: str,
    uniforms: np.ndarray | None,
) -> int:
    """Index of the first node where the level `target` (> 0) is reached,
    or -1.  `values` must be oriented so the level is positive; `prev` is
    the value one node earlier.  Only the prefix before the first hit ever
    influences the result."""
    at_node = values >= target - hit_tol
    if crossing == "bridge":
        lagged = np.empty_like(values)
        lagged[0] = prev
        lagged[1:] = values[:-1]
        gap_prev = target - lagged
        gap_here = target - values
        both_below = ~at_node & (gap_prev > 0)
        with np.errstate(over="ignore", invalid="ignore"):
            p = np.exp(-2.0 * gap_prev * gap_here / deltas)
        hit = at_node | (both_below & (uniforms[: values.shape[0]] < p))
    else:
        hit = at_node
    idx = int(np.argmax(hit))
    if not hit[idx]:
        return -1
    return idx


def _walk_to_hit(
    rule: HittingRule,
    level: float,
    handle: ReplicationHandle,
    fine_cap: float,
    budget: float,
    gn: np.random.Generator,
    gu: np.random.Generator,
    collect: bool = False,
) -> tuple[bool, float, float, np.ndarray | None, float]:
    """Search loop shared by first_hit and the Monte Carlo estimators.

    Walks the uniform t-lattice while the clock is below fine_cap, then
    clock-doubling nodes up to the budget (crossing events there are still
    exact; only the reported time coarsens, where discount weights are
    already below exp(-25)).

    Returns (censored, clock, t_node, fine_path, last_value): fine_path
    (collect=True) holds path values at fine nodes 0..k_hit; last_value is
    the path value at the final examined node.
    """
    sign = -1.0 if level < 0 else 1.0
    target = abs(level)
    bridge = rule.crossing == "bridge"
    dt = handle.dt
    is_axis = rule.kind == "axis"
    coef = float(rule.x0 if is_axis else rule.c)
    zsign = (-1.0 if handle.negate else 1.0) * sign
    k_fine = _fine_node_count(rule, dt, min(fine_cap, budget))
    path_chunks: list[np.ndarray] = [np.zeros(1)] if collect else []
    _empty = np.empty(0)
    prev_clock = 0.0
    prev_value = 0.0  # oriented value: sign * B along the path
    k = 1
    units = 1
    while k <= k_fine:
        m = units * _UNIT
        m_valid = min(k_fine - k + 1, m)
        z = gn.standard_normal(m)
        uniforms = gu.random(m) if bridge else _empty
        out_vals = np.empty(m_valid)
        idx, value, clock = _walk_chunk(
            z, uniforms, m_valid, out_vals, prev_value, k, dt, coef,
            is_axis, target, rule.hit_tol, bridge, zsign,
        )
        if idx >= 0:
            if collect:
                path_chunks.append(sign * out_vals[: idx + 1])
            path = np.concatenate(path_chunks) if collect else None
            return False, clock, (k + idx) * dt, path, sign * value
        if collect:
            path_chunks.append(sign * out_vals)
        prev_clock = clock
        prev_value = value
        k += m_valid
        units = min(units * 2, _MAX_UNITS)
    # Coarse tail: clock-doubling nodes up to the budget, final node exact.
    if prev_clock < budget:
        nodes = []
        u = prev_clock
        if u == 0.0:
            # Budget below one lattice step: one exact crossing event.
            nodes.append(budget)
            u = budget
        while u < budget:
            u = min(2.0 * u, budget)
            nodes.append(u)
        clocks = np.array(nodes)
        deltas = np.diff(clocks, prepend=prev_clock)
        m = int(np.ceil(clocks.shape[0] / 64)) * 64
        z = gn.standard_normal(m)
        uniforms = gu.random(m) if bridge else None
        incr = zsign * z[: clocks.shape[0]] * np.sqrt(deltas)
        values = prev_value + np.cumsum(incr)
        idx = _scan_values(values, prev_value, deltas, target, rule.hit_tol, rule.crossing, uniforms)
        if idx >= 0:
            t_node = rule.clock_to_point(float(clocks[idx]))[0]
            path = np.concatenate(path_chunks) if collect else None
            return False, float(clocks[idx]), t_node, path, sign * float(values[idx])
        prev_value = float(values[-1])
    path = np.concatenate(path_chunks) if collect else None
    return True, budget, rule.clock_to_point(budget)[0], path, sign * prev_value


def first_hit(handle: ReplicationHandle, rule: HittingRule, level: float) -> StoppingPoint:
    """First crossing of `level` along the rule's search path.

    Censoring is a value, not an error: once tau1*tau2 would exceed the
    rule's budget the point is reported censored with tau1*tau2 = budget.
    """
    if not math.isfinite(level):
        raise ConfigurationError("level must be finite")
    if level == 0.0:
        tau1, tau2 = (0.0, float(rule.x0)) if rule.kind == "axis" else (0.0, 0.0)
        return StoppingPoint(tau1, tau2, level, censored=False)
    budget = rule.budget if rule.budget is not None else default_budget(1.0, level)
    gn, gu = rep_generators(handle.seed, handle.substream)
    censored, clock, t_node, _, _ = _walk_to_hit(
        rule, level, handle, fine_cap=budget, budget=budget, gn=gn, gu=gu
    )
    if censored:
        tau1, tau2 = rule.clock_to_point(budget)
        return StoppingPoint(tau1, tau2, level, censored=True)
    tau1, tau2 = rule.point_at(t_node)
    return StoppingPoint(tau1, tau2, level, censored=False)


def hit_independence_check(
    rules: list[HittingRule],
    y: float,
    beta: float,
    n: int,
    seed: int = 0,
    bias_frac: float = 1e-3,
):
    """Estimate E[exp(-beta^2/2 * tau1*tau2)] once per rule.

    The identity's target exp(-beta*|y|) is rule-free, so the estimates
    must agree with it and with each other; rules get disjoint substream
    blocks so the comparison is honest.
    """
    from .montecarlo import McConfig, estimate_laplace
    from .sheet import RngPolicy

    if n < 1000:
        raise ConfigurationError("hit_independence_check requires n >= 1000")
    out = []
    for k, rule in enumerate(rules):
        cfg = McConfig(
            n=n,
            rule=rule,
            rng=RngPolicy(seed=seed),
            substream_base=k * n,
            bias_frac=bias_frac,
        )
        out.append(estimate_laplace(cfg, beta, y))
    return out
