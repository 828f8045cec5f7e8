"""Discretized least-concave-majorant machinery on a one-dimensional
state grid: the upper concave envelope, the iterative smoothing scheme
that climbs to it, and continuation-region extraction.

For the driftless constant-sigma field the transition started at a state
y is Gaussian with variance sigma^2 * t * x, so one lookahead step is a
Gaussian convolution indexed by the variance v = t*x.  Values beyond the
grid window read as reward zero (absorption), which keeps the iteration
monotone and bounded by the window's concave envelope; reflecting mass
back instead would let the iteration ratchet up to the global maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "GridFunction",
    "SdeConfig",
    "ContinuationRegion",
    "RegionNesting",
    "default_variance_grid",
    "least_concave_majorant",
    "iterate_gn",
    "continuation_region",
    "nested_regions_check",
]


@dataclass(frozen=True)
class GridFunction:
    """Nonnegative reward sampled on a uniform strictly increasing grid."""

    ys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if ys.ndim != 1 or ys.shape != values.shape or ys.size < 2:
            raise ConfigurationError("grid function needs matching 1-d arrays, >= 2 nodes")
        steps = np.diff(ys)
        if not np.all(steps > 0):
            raise ConfigurationError("grid must be strictly increasing")
        if np.max(steps) - np.min(steps) > 1e-9 * np.max(steps):
            raise ConfigurationError("grid must be uniform")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ConfigurationError("values must be finite and nonnegative")
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "values", values)

    @property
    def step(self) -> float:
        return float(self.ys[1] - self.ys[0])

    @property
    def width(self) -> float:
        return float(self.ys[-1] - self.ys[0])


def default_variance_grid(width: float, levels: int = 13, ratio: float = 4.0) -> np.ndarray:
    """Dyadic variance ladder {0} U {ratio^-k * width^2 : k = 0..levels-1}.

    The default span [0, width^2] covers one traversal of the window; a
    denser ladder (ratio=2, levels=26) tightens the fixed-iteration-count
    convergence gap at modest cost.
    """
    vmax = width * width
    ladder = vmax * ratio ** (-np.arange(levels, dtype=float))
    return np.concatenate(([0.0], ladder[::-1]))


@dataclass(frozen=True)
class SdeConfig:
    """Constant diffusion coefficient and the variance search ladder."""

    sigma: float = 1.0
    variance_grid: np.ndarray | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if self.variance_grid is not None:
            vg = np.asarray(self.variance_grid, dtype=float)
            if vg.size == 0 or vg.min() < 0 or 0.0 not in vg:
                raise ConfigurationError("variance_grid must be nonnegative and contain 0")
            object.__setattr__(self, "variance_grid", np.unique(vg))

    def ladder_for(self, g: GridFunction) -> np.ndarray:
        if self.variance_grid is not None:
            return self.variance_grid
        return default_variance_grid(g.width)


@dataclass(frozen=True)
class ContinuationRegion:
    """Nodes where stopping is suboptimal by more than epsilon."""

    mask: np.ndarray
    epsilon: float


def _chord(ys: np.ndarray, g: np.ndarray, i: int, j: int, k: np.ndarray) -> np.ndarray:
    """Chord through nodes i < j evaluated at nodes k (division last, so
    a chord evaluates bit-identically however it is enumerated)."""
    return g[i] + (g[j] - g[i]) * (ys[k] - ys[i]) / (ys[j] - ys[i])


def least_concave_majorant(g: GridFunction) -> GridFunction:
    """Upper concave envelope on the grid: the smallest concave function
    dominating g, linear between contact nodes and equal to g at them.

    Single monotone-chain sweep keeping the vertices of decreasing chord
    slope; exact on the grid (matches the all-chords construction).
    """
    ys, vals = g.ys, g.values
    n = ys.size
    hull = [0]
    for i in range(1, n):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b when slope(a,b) <= slope(b,i): b is at or below chord (a,i)
            if (vals[b] - vals[a]) * (ys[i] - ys[b]) <= (vals[i] - vals[b]) * (ys[b] - ys[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.empty_like(vals)
    for left, right in zip(hull[:-1], hull[1:]):
        env[left] = vals[left]
        if right > left + 1:
            mids = np.arange(left + 1, right)
            env[mids] = _chord(ys, vals, left, right, mids)
    env[hull[-1]] = vals[hull[-1]]
    return GridFunction(ys=ys, values=env)


def _gaussian_cell_kernel(std: float, step: float) -> np.ndarray:
    """Cell-mass weights of a centered Gaussian on the grid, truncated at
    six standard deviations.  Nonnegative with sum <= 1; the deficit is
    the truncated tail mass (< 4e-9)."""
    m = max(1, int(math.ceil(6.0 * std / step)))
    edges = (np.arange(-m, m + 1, dtype=float) - 0.5) * step / std
    edges = np.append(edges, (m + 0.5) * step / std)
    cdf = np.array([0.5 * (1.0 + math.erf(e / math.sqrt(2.0))) for e in edges])
    return np.diff(cdf)


def _fold_absorbed(conv_full: np.ndarray, n: int, half: int, period: int) -> np.ndarray:
    """Assemble the window-absorbed (Dirichlet) kernel application from a
    full free-space convolution via the method of images: alternating-sign
    copies reflected about both window edges.  Row masses are the exact
    cell integrals of the absorbed transition density, so they stay
    nonnegative and sum to the survival probability."""
    out = np.zeros(n)
    idx = np.arange(n)
    m_max = (half + n) // (2 * period) + 1
    for m in range(-m_max, m_max + 1):
        base = half - 2 * m * period
        pos = base + idx
        ok = (pos >= 0) & (pos < conv_full.size)
        out[ok] += conv_full[pos[ok]]
        neg = base - idx
        ok = (neg >= 0) & (neg < conv_full.size)
        out[ok] -= conv_full[neg[ok]]
    return out


def iterate_gn(g: GridFunction, sde: SdeConfig, n_max: int) -> list[GridFunction]:
    """Value-iteration sequence g = g_0 <= g_1 <= ... climbing toward the
    concave envelope: each step takes the best single lookahead over the
    variance ladder (v = 0 keeps the previous iterate, so monotonicity is
    exact) under the window-absorbed Gaussian transition.

    Paths are absorbed at the window edges collecting the reward there.
    Since the chord between the edge values is harmonic for the absorbed
    walk, the iteration runs on (g - chord) with zero-value absorption and
    adds the chord back; the concave envelope commutes with the shift.

    Returns the n_max + 1 iterates g_0 .. g_{n_max}.
    """
    if n_max < 0:
        raise ConfigurationError("n_max must be nonnegative")
    ladder = sde.ladder_for(g)
    step = g.step
    kernels = []
    for v in ladder:
        if v <= 0.0:
            continue
        std = sde.sigma * math.sqrt(v)
        if std < 1e-12 * step:
            continue
        kernels.append(_gaussian_cell_kernel(std, step))
    n = g.values.size
    period = n - 1
    chord = g.values[0] + (g.values[-1] - g.values[0]) * np.arange(n) / period
    out = [g]
    current = g.values - chord
    for _ in range(n_max):
        best = current
        for kernel in kernels:
            half = (kernel.size - 1) // 2
            smoothed = _fold_absorbed(np.convolve(current, kernel), n, half, period)
            best = np.maximum(best, smoothed)
        current = best
        out.append(GridFunction(ys=g.ys, values=np.maximum(current + chord, g.values)))
    return out


def continuation_region(
    g: GridFunction, ghat: GridFunction, epsilon: float = 0.0
) -> ContinuationRegion:
    """Nodes where g < ghat - epsilon; empty wherever they agree."""
    if epsilon < 0:
        raise ConfigurationError("epsilon must be nonnegative")
    if g.ys.shape != ghat.ys.shape or not np.array_equal(g.ys, ghat.ys):
        raise ConfigurationError("grid mismatch between reward and majorant")
    mask = (ghat.values - g.values) > epsilon
    return ContinuationRegion(mask=mask, epsilon=epsilon)


@dataclass(frozen=True)
class RegionNesting:
    """Outcome of the capped-reward nesting check."""

    ok: bool
    first_violation: tuple[int, str] | None
    masks: list[np.ndarray] = field(repr=False, default_factory=list)


def nested_regions_check(g: GridFunction, caps: list[float]) -> RegionNesting:
    """Verify the capped continuation regions grow with the cap and stay
    inside the uncapped region and inside {g < cap}."""
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise ConfigurationError("caps must be increasing")
    full = continuation_region(g, least_concave_majorant(g)).mask
    masks = []
    for cap in caps:
        capped = GridFunction(ys=g.ys, values=np.minimum(g.values, cap))
        masks.append(continuation_region(capped, least_concave_majorant(capped)).mask)
    for idx, (cap, mask) in enumerate(zip(caps, masks)):
        bad = np.nonzero(mask & ~(g.values < cap))[0]
        if bad.size:
            return RegionNesting(False, (int(bad[0]), f"D_{cap} not inside {{g < {cap}}}"), masks)
        bad = np.nonzero(mask & ~full)[0]
        if bad.size:
            return RegionNesting(False, (int(bad[0]), f"D_{cap} not inside D"), masks)
        if idx + 1 < len(masks):
            bad = np.nonzero(mask & ~masks[idx + 1])[0]
            if bad.size:
                return RegionNesting(
                    False, (int(bad[0]), f"D_{cap} not inside D_{caps[idx + 1]}"), masks
                )
    return RegionNesting(True, None, masks)
