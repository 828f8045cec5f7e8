"""Monte Carlo estimators for the stopping identities.

Replication r draws from substream (substream_base + r), so every
estimate is a pure function of (seed, n, config) and is unchanged by how
replications are partitioned across workers.

The integrated-functional estimator targets the lattice quadrature
sum_ij exp(-rho*t_i*x_j) B(t_i,x_j) dt dx over [0,tau1] x [0,tau2].  Its
default engine samples that quadrature exactly in law without
materialising the interior field: conditional on the search column, the
field splits into the linear bridge profile (x/x0) B(t, x0) plus an
independent Gaussian remainder whose quadrature-weighted variance is a
deterministic function of the stopping row, precomputed once per run.  A
``direct`` engine that materialises the full lattice row by row is kept
for cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytics import Reward
from .errors import ConfigurationError
from .hitting import (
    HittingRule,
    ReplicationHandle,
    _scan_values,
    _walk_to_hit,
    default_budget,
    rep_generators,
)
from .sheet import GridSpec, RngPolicy

__all__ = [
    "McEstimate",
    "McConfig",
    "estimate_laplace",
    "estimate_discounted_reward",
    "estimate_integrated",
    "check_exponential_martingale",
    "check_isometry",
    "check_second_moment",
]

CENSOR_WARNING_FRACTION = 0.01


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    censored: int
    seed: int
    warnings: tuple[str, ...] = ()

    def z_score(self, target: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == target else math.inf
        return (self.mean - target) / self.stderr


@dataclass(frozen=True)
class McConfig:
    """Shared estimator configuration.

    grid supplies an explicit lattice template; when None the path step is
    derived from bias_frac (target relative clock-discretization bias).
    workers only partitions the substream range; results are identical for
    any worker count.
    """

    n: int
    rule: HittingRule = HittingRule.axis(1.0)
    rng: RngPolicy = RngPolicy(0)
    grid: GridSpec | None = None
    substream_base: int = 0
    antithetic: bool = False
    workers: int = 1
    bias_frac: float = 2e-3

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError("Monte Carlo configs require n >= 2")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if not 0 < self.bias_frac < 1:
            raise ConfigurationError("bias_frac must lie in (0, 1)")

    def substream_for(self, r: int) -> tuple[int, bool]:
        if self.antithetic:
            return self.substream_base + r // 2, bool(r % 2)
        return self.substream_base + r, False


def _worker_blocks(n: int, workers: int) -> list[range]:
    """Contiguous replication blocks; concatenated results are order-stable."""
    size = (n + workers - 1) // workers
    return [range(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _finalize(values: np.ndarray, censored: int, seed: int, extra: tuple[str, ...] = ()) -> McEstimate:
    n = values.shape[0]
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    warnings = tuple(extra)
    if censored > n * CENSOR_WARNING_FRACTION:
        warnings += (f"censored fraction {censored / n:.2%} exceeds 1%",)
    return McEstimate(mean=mean, stderr=stderr, n=n, censored=censored, seed=seed, warnings=warnings)


def _path_dt(cfg: McConfig, lam: float, fine_cap: float, target_scale: float) -> float:
    """Lattice step along t keeping the one-sided clock bias of crossing
    reports below bias_frac relative to the estimate scale.

    Axis paths have a constant clock step, so lam * step <= bias_frac is
    directly relative.  Diagonal clock steps grow linearly in t; bounding
    exp(-lam u) sqrt(u) by its maximum gives the absolute bias bound
    0.61 * dt * sqrt(2 lam c), converted to relative via target_scale.
    """
    if cfg.grid is not None:
        return cfg.grid.dt
    rule = cfg.rule
    if lam <= 0:
        lam = 1e-6
    if rule.kind == "axis":
        dt = cfg.bias_frac / (lam * rule.x0)
        return min(dt, fine_cap / (128.0 * rule.x0))
    dt = cfg.bias_frac * target_scale / (0.607 * math.sqrt(2.0 * lam * rule.c))
    return min(dt, math.sqrt(fine_cap / rule.c) / 128.0)


BIAS_CAP_CLOCK = 25.0  # lam * clock = 25 -> discount mass exp(-25) < 1e-10


def _run_hit_discount(
    cfg: McConfig, lam: float, level: float
) -> tuple[np.ndarray, int]:
    """exp(-lam * clock) over all replications, with censored samples
    contributing the analytic bound exp(-lam * budget)."""
    rule = cfg.rule
    beta = math.sqrt(2.0 * lam)
    budget = rule.budget if rule.budget is not None else default_budget(beta, level)
    fine_cap = min(budget, BIAS_CAP_CLOCK / lam) if lam > 0 else budget
    dt = _path_dt(cfg, lam, fine_cap, math.exp(-beta * abs(level)))
    seed = cfg.rng.seed
    values = np.empty(cfg.n)
    censored = 0
    for block in _worker_blocks(cfg.n, cfg.workers):
        for r in block:
            substream, negate = cfg.substream_for(r)
            gn, gu = rep_generators(seed, substream)
            handle = ReplicationHandle(seed=seed, substream=substream, dt=dt, negate=negate)
            cens, clock, _, _, _ = _walk_to_hit(rule, level, handle, fine_cap, budget, gn, gu)
            if cens:
                censored += 1
                values[r] = math.exp(-lam * budget)
            else:
                values[r] = math.exp(-lam * clock)
    return values, censored


def estimate_laplace(cfg: McConfig, beta: float, y: float) -> McEstimate:
    """Mean of exp(-beta^2/2 * tau1*tau2) over first hits of level y.

    Target: exp(-beta * |y|) for every rule searching level y.
    """
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    if beta == 0.0 or y == 0.0:
        return McEstimate(mean=1.0, stderr=0.0, n=cfg.n, censored=0, seed=cfg.rng.seed)
    lam = 0.5 * beta * beta
    values, censored = _run_hit_discount(cfg, lam, y)
    return _finalize(values, censored, cfg.rng.seed)


def estimate_discounted_reward(
    cfg: McConfig, rho: float, reward: Reward, y: float
) -> McEstimate:
    """Mean of exp(-rho * tau1*tau2) * h(y) over first hits of level y > 0.

    Target: h(y) * exp(-sqrt(2 rho) y).
    """
    if rho <= 0:
        raise ConfigurationError("rho must be positive")
    if y <= 0:
        raise ConfigurationError("discounted-reward estimation requires y > 0")
    hy = reward.value(y)
    values, censored = _run_hit_discount(cfg, rho, y)
    return _finalize(values * hy, censored, cfg.rng.seed)


# ---------------------------------------------------------------------------
# Integrated discounted functional
# ---------------------------------------------------------------------------


def _bridge_tables(
    rho: float, x0: float, dt: float, J: int, rows: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row quadrature weights and conditional noise scale.

    Returns (c, sigma): c[i] is the x-quadrature of the bridge profile on
    row i, so the conditional mean of the quadrature stopped at row I is
    dt * sum_{i<I} path[i] * c[i];  sigma[I] is the standard deviation of
    the remainder (the quadrature of the field minus its bridge profile),
    which depends only on I.
    """
    dx = x0 / J
    xs = np.arange(1, J) * dx  # interior columns; j=0 contributes nothing
    c = np.zeros(rows + 1)
    sigma_sq = np.zeros(rows + 2)
    # Recursion state over the min-decompositions of the covariance:
    # U[l] = sum_m G_{m,l}, SP = sum_{m,l} G_{m,l}^2 with
    # G_{m,l} = sum_{i=m..r} sum_{j=l..J-1} w_ij, and the analogous scalar
    # pair (UH, SH) for the bridge-projection term.
    U = np.zeros(J - 1)
    SP = 0.0
    UH = 0.0
    SH = 0.0
    scale = (dt * dx) ** 2 * dt
    for r in range(1, rows + 1):
        w = np.exp((-rho * r * dt) * xs)
        c[r] = (dx / x0) * float(np.dot(w, xs))
        R = np.cumsum(w[::-1])[::-1]  # suffix sums over j
        h = float(np.dot(w, xs))
        SP += 2.0 * float(np.dot(R, U)) + r * float(np.dot(R, R))
        U += r * R
        SH += 2.0 * h * UH + r * h * h
        UH += r * h
        sigma_sq[r + 1] = scale * (dx * SP - SH / x0)
    return c, np.sqrt(np.maximum(sigma_sq, 0.0))


def _integrated_grid(cfg: McConfig, resolution: int) -> tuple[float, int, float]:
    rule = cfg.rule
    if rule.kind != "axis":
        raise ConfigurationError("estimate_integrated supports axis rules only")
    x0 = float(rule.x0)
    dt = 1.0 / resolution
    J = round(x0 * resolution)
    if J < 1 or abs(J - x0 * resolution) > 1e-9:
        raise ConfigurationError("x0 must be a whole number of lattice cells")
    return x0, J, dt


def _censor_tail_factor(rho: float, clock: float) -> float:
    """E[ tail of the discounted integral | column ] = W(T) * factor,
    with factor = (1 - exp(-rho*clock)) / (rho*clock)."""
    s = rho * clock
    return (1.0 - math.exp(-s)) / (rho * s)


def estimate_integrated(
    cfg: McConfig,
    rho: float,
    y: float,
    resolution: int = 256,
    method: str = "bridge",
) -> McEstimate:
    """Lattice quadrature of exp(-rho*t*x) B(t,x) over the stopped
    rectangle, targeting the integrated value curve at y.

    resolution is the cell count per unit length in both directions.
    Censored replications contribute their realized partial quadrature
    plus the analytic conditional mean of the tail beyond the budget
    (exact given the observed column), leaving only the post-hit tail of
    censored paths unmodeled, bounded by |y| (1-e^{-rho C})/(rho^2 C) per
    censored path.
    """
    if rho <= 0:
        raise ConfigurationError("rho must be positive")
    if method not in ("bridge", "direct"):
        raise ConfigurationError(f"unknown method {method!r}")
    if y == 0.0:
        return McEstimate(mean=0.0, stderr=0.0, n=cfg.n, censored=0, seed=cfg.rng.seed)
    x0, J, dt = _integrated_grid(cfg, resolution)
    rule = cfg.rule
    budget = rule.budget if rule.budget is not None else default_budget(math.sqrt(2 * rho), 0.0)
    delta = x0 * dt
    rows_budget = max(1, int(math.floor(budget / delta + 1e-9)))
    budget_exact = rows_budget * delta
    seed = cfg.rng.seed
    values = np.empty(cfg.n)
    censored = 0
    clocks_sum = 0.0
    if method == "bridge":
        c, sigma = _bridge_tables(rho, x0, dt, J, rows_budget)
        for block in _worker_blocks(cfg.n, cfg.workers):
            for r in block:
                substream, negate = cfg.substream_for(r)
                gn, gu = rep_generators(seed, substream)
                handle = ReplicationHandle(seed=seed, substream=substream, dt=dt, negate=negate)
                cens, clock, t_node, path, last = _walk_to_hit(
                    rule, y, handle, budget_exact, budget_exact, gn, gu, collect=True
                )
                rows = rows_budget if cens else int(round(t_node / dt))
                v = dt * float(np.dot(path[1:rows], c[1:rows]))
                v += float(sigma[rows]) * float(gu.standard_normal())
                if cens:
                    censored += 1
                    v += last * _censor_tail_factor(rho, budget_exact)
                clocks_sum += clock
                values[r] = v
    else:
        for block in _worker_blocks(cfg.n, cfg.workers):
            for r in block:
                substream, negate = cfg.substream_for(r)
                v, cens, clock = _integrated_direct_rep(
                    cfg, rho, y, x0, J, dt, rows_budget, seed, r
                )
                if cens:
                    censored += 1
                clocks_sum += clock
                values[r] = v
    extra: tuple[str, ...] = ()
    mean_clock = clocks_sum / cfg.n
    if dt * dt > 1e-3 * mean_clock:
        extra = ("grid resolution coarse relative to mean stopping rectangle",)
    return _finalize(values, censored, seed, extra)


def _integrated_direct_rep(
    cfg: McConfig,
    rho: float,
    y: float,
    x0: float,
    J: int,
    dt: float,
    rows_budget: int,
    seed: int,
    r: int,
) -> tuple[float, bool, float]:
    """One replication of the direct (full-lattice) quadrature."""
    substream, negate = cfg.substream_for(r)
    gn, gu = rep_generators(seed, substream)
    rule = cfg.rule
    dx = x0 / J
    xs_interior = np.arange(1, J) * dx
    sign = -1.0 if y < 0 else 1.0
    target = abs(y)
    scale = math.sqrt(dt * dx)
    delta = x0 * dt
    prev_row = np.zeros(J)
    prev_col = 0.0
    total = 0.0
    k = 1
    units = 1
    hit_rows = -1
    while k <= rows_budget:
        m = units * 256
        m_valid = min(rows_budget - k + 1, m)
        z = gn.standard_normal((m, J))
        uniforms = gu.random(m) if rule.crossing == "bridge" else None
        block = z[:m_valid] * scale
        if negate:
            block = -block
        np.cumsum(block, axis=1, out=block)
        np.cumsum(block, axis=0, out=block)
        block += prev_row
        col = sign * block[:, J - 1]
        deltas = np.full(m_valid, delta)
        idx = _scan_values(col, sign * prev_col, deltas, target, rule.hit_tol, rule.crossing, uniforms)
        used = idx if idx >= 0 else m_valid
        if used > 0:
            ts = (np.arange(k, k + used) * dt)[:, None]
            w = np.exp(-rho * ts * xs_interior[None, :])
            total += float(np.sum(w * block[:used, : J - 1]))
        if idx >= 0:
            hit_rows = k + idx
            break
        prev_row = block[m_valid - 1].copy()
        prev_col = prev_row[J - 1]
        k += m_valid
        units = min(units * 2, 8)
    total *= dt * dx
    if hit_rows >= 0:
        return total, False, hit_rows * delta
    # Censored: analytic conditional mean of the tail integral given the
    # final lattice row, int_{t>T} exp(-rho t x)/(rho x)-weighted profile.
    t_end = rows_budget * dt
    profile = prev_row[: J - 1]  # columns x_1 .. x_{J-1}
    tail = float(np.sum(profile * np.exp(-rho * t_end * xs_interior) / (rho * xs_interior)) * dx)
    return total + tail, True, rows_budget * delta


# ---------------------------------------------------------------------------
# Field identity checks
# ---------------------------------------------------------------------------


def _identity_grid(cfg: McConfig, t: float, x: float) -> GridSpec:
    if cfg.grid is not None:
        spec = cfg.grid
    else:
        spec = GridSpec(t_max=t, x_max=x, nt=max(1, round(64 * t)), nx=max(1, round(64 * x)))
    it = t / spec.dt
    jx = x / spec.dx
    if abs(it - round(it)) > 1e-9 or abs(jx - round(jx)) > 1e-9:
        raise ConfigurationError("(t, x) must be lattice nodes of the grid template")
    if t > spec.t_max + 1e-12 or x > spec.x_max + 1e-12:
        raise ConfigurationError("(t, x) outside the grid template")
    return spec


def _cell_increments(spec: GridSpec, seed: int, substream: int, negate: bool) -> np.ndarray:
    """Raw N(0, dt*dx) cell increments, drawn exactly as generate_sheet does."""
    from .sheet import substream_generator

    out = substream_generator(seed, substream).standard_normal((spec.nt, spec.nx))
    out *= math.sqrt(spec.dt * spec.dx)
    if negate:
        np.negative(out, out)
    return out


def check_exponential_martingale(cfg: McConfig, beta: float, t: float, x: float) -> McEstimate:
    """Mean of exp(beta*B(t,x) - beta^2/2 * t*x); target 1 for any beta."""
    if beta == 0.0:
        return McEstimate(mean=1.0, stderr=0.0, n=cfg.n, censored=0, seed=cfg.rng.seed)
    spec = _identity_grid(cfg, t, x)
    it, jx = round(t / spec.dt), round(x / spec.dx)
    shift = 0.5 * beta * beta * t * x
    values = np.empty(cfg.n)
    for block in _worker_blocks(cfg.n, cfg.workers):
        for r in block:
            substream, negate = cfg.substream_for(r)
            incr = _cell_increments(spec, cfg.rng.seed, substream, negate)
            b = float(incr[:it, :jx].sum())
            values[r] = math.exp(beta * b - shift)
    return _finalize(values, 0, cfg.rng.seed)


def check_second_moment(cfg: McConfig, t: float, x: float) -> McEstimate:
    """Mean of B(t,x)^2; target t*x."""
    if t == 0.0 or x == 0.0:
        return McEstimate(mean=0.0, stderr=0.0, n=cfg.n, censored=0, seed=cfg.rng.seed)
    spec = _identity_grid(cfg, t, x)
    it, jx = round(t / spec.dt), round(x / spec.dx)
    values = np.empty(cfg.n)
    for block in _worker_blocks(cfg.n, cfg.workers):
        for r in block:
            substream, negate = cfg.substream_for(r)
            incr = _cell_increments(spec, cfg.rng.seed, substream, negate)
            b = float(incr[:it, :jx].sum())
            values[r] = b * b
    return _finalize(values, 0, cfg.rng.seed)


def check_isometry(cfg: McConfig, phi, t: float, x: float) -> tuple[McEstimate, McEstimate]:
    """Second moment of the lattice stochastic integral of a deterministic
    integrand phi against the sheet, versus the lattice quadrature of
    phi^2.  phi is evaluated at cell midpoints and must broadcast over
    numpy arrays."""
    spec = _identity_grid(cfg, t, x)
    it, jx = round(t / spec.dt), round(x / spec.dx)
    s_mid = (np.arange(it) + 0.5) * spec.dt
    a_mid = (np.arange(jx) + 0.5) * spec.dx
    mesh = np.asarray(phi(s_mid[:, None], a_mid[None, :]), dtype=float)
    if mesh.shape != (it, jx):
        mesh = np.broadcast_to(mesh, (it, jx)).astype(float)
    right_value = float(np.sum(mesh * mesh) * spec.dt * spec.dx)
    values = np.empty(cfg.n)
    for block in _worker_blocks(cfg.n, cfg.workers):
        for r in block:
            substream, negate = cfg.substream_for(r)
            incr = _cell_increments(spec, cfg.rng.seed, substream, negate)
            integral = float(np.sum(mesh * incr[:it, :jx]))
            values[r] = integral * integral
    left = _finalize(values, 0, cfg.rng.seed)
    right = McEstimate(mean=right_value, stderr=0.0, n=cfg.n, censored=0, seed=cfg.rng.seed)
    return left, right
