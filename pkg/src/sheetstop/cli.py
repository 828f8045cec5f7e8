"""Command-line surface: every experiment as a subcommand emitting CSV or
JSON plus a replayable run manifest.

Exit codes: 0 all checks passed, 1 statistical/identity failure, 2
configuration error.  Flags override an optional key=value config file,
which overrides defaults; the default seed comes from SHEETSTOP_SEED.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    DiscountConfig,
    Reward,
    baseline_levels,
    hitting_threshold,
    hitting_value,
    integrated_threshold,
    integrated_value,
    sample_curve,
    threshold_root,
)
from .errors import BracketError, ConfigurationError, ConvergenceError, DomainError
from .hitting import HittingRule
from .majorant import (
    GridFunction,
    SdeConfig,
    continuation_region,
    default_variance_grid,
    iterate_gn,
    least_concave_majorant,
)
from .montecarlo import (
    McConfig,
    check_exponential_martingale,
    check_isometry,
    check_second_moment,
    estimate_integrated,
    estimate_laplace,
)
from .sheet import GridSpec, RngPolicy

SEED_ENV_VAR = "SHEETSTOP_SEED"
Z_GATE = 3.0


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    cfg: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line must be key=value, got {line!r}")
        key, _, value = line.partition("=")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


class _Resolver:
    """flags > config file > defaults, with typed casting."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self.args = args
        self.config = config
        self.resolved: dict[str, object] = {}

    def get(self, key: str, default, cast=None, multi: bool = False):
        value = getattr(self.args, key, None)
        if value is None and key in self.config:
            raw = self.config[key]
            value = raw.split() if multi else raw
        if value is None:
            value = default
        if value is not None and cast is not None:
            value = [cast(v) for v in value] if multi else cast(value)
        self.resolved[key] = value
        return value


def _write_manifest(command: str, resolver: _Resolver, out: str) -> None:
    manifest = {
        "command": command,
        "parameters": {
            k: (list(v) if isinstance(v, (list, tuple)) else v)
            for k, v in resolver.resolved.items()
        },
        "seed": resolver.resolved.get("seed"),
        "timestamp": _timestamp(),
        "artifact_version": __version__,
    }
    if out == "-":
        path = Path(f"{command}.manifest.json")
    else:
        path = Path(out).with_suffix(".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _emit(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _parse_reward(text: str) -> Reward:
    if text == "linear":
        return Reward.linear()
    kind, _, arg = text.partition(":")
    if kind == "power":
        try:
            return Reward.of_power(int(arg))
        except ValueError:
            raise ConfigurationError(f"bad power reward {text!r}") from None
    if kind == "exp":
        try:
            k = float(arg)
        except ValueError:
            raise ConfigurationError(f"bad exp reward {text!r}") from None
        return Reward.custom(lambda y: math.exp(k * y), lambda y: k * math.exp(k * y))
    raise ConfigurationError(f"unknown reward {text!r}")


def _z_value(estimate: float, stderr: float, target: float, allowance: float = 0.0) -> float:
    scale = max(stderr, allowance / Z_GATE)
    if scale == 0.0:
        return 0.0 if estimate == target else math.inf
    return (estimate - target) / scale


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_laplace_check(args: argparse.Namespace, config: dict[str, str]) -> int:
    r = _Resolver(args, config)
    betas = r.get("beta", ["1"], float, multi=True)
    ys = r.get("y", ["1"], float, multi=True)
    rules = r.get("rule", ["axis:1"], str, multi=True)
    n = r.get("n", 20000, int)
    seed = r.get("seed", _default_seed(), int)
    crossing = r.get("crossing", "bridge", str)
    budget = r.get("budget", None, float)
    bias_frac = r.get("bias_frac", 2e-3, float)
    out = r.get("out", "-", str)
    parsed_rules = [HittingRule.parse(t, budget=budget, crossing=crossing) for t in rules]
    rows = []
    all_pass = True
    combo = 0
    for rule, text in zip(parsed_rules, rules):
        for beta in betas:
            for y in ys:
                cfg = McConfig(
                    n=n,
                    rule=rule,
                    rng=RngPolicy(seed),
                    substream_base=combo * n,
                    bias_frac=bias_frac,
                )
                est = estimate_laplace(cfg, beta, y)
                target = math.exp(-beta * abs(y))
                z = _z_value(est.mean, est.stderr, target)
                all_pass &= abs(z) <= Z_GATE
                rows.append(
                    [beta, y, text, f"{est.mean:.10g}", f"{est.stderr:.6g}",
                     f"{target:.10g}", f"{z:.4g}", est.censored]
                )
                combo += 1
    _emit(out, _csv_text(
        ["beta", "y", "rule", "estimate", "stderr", "target", "z_score", "censored"], rows
    ))
    _write_manifest("laplace-check", r, out)
    return 0 if all_pass else 1


def cmd_thresholds(args: argparse.Namespace, config: dict[str, str]) -> int:
    r = _Resolver(args, config)
    rho = r.get("rho", 0.5, float)
    reward_text = r.get("reward", "linear", str)
    out = r.get("out", "-", str)
    cfg = DiscountConfig(rho)
    reward = _parse_reward(reward_text)
    level = hitting_threshold(cfg, reward)
    z_star = threshold_root()
    y_star = integrated_threshold(cfg)
    pos, neg = baseline_levels(cfg)
    report: dict[str, object] = {
        "rho": rho,
        "reward": reward_text,
        "hitting": level,
        "hitting_value": hitting_value(cfg, reward, level) if level is not None else None,
        "integrated": y_star,
        "z_star": z_star,
        "integrated_value_max": integrated_value(cfg, y_star),
        "baseline_pos": pos,
        "baseline_neg": neg,
        "sign_reversal": bool(y_star > 0 > neg),
    }
    if level is None:
        report["reason"] = "no maximizer"
    _emit(out, json.dumps(report, indent=2) + "\n")
    _write_manifest("thresholds", r, out)
    return 0


def cmd_curves(args: argparse.Namespace, config: dict[str, str]) -> int:
    r = _Resolver(args, config)
    function = r.get("function", "integrated", str)
    rho = r.get("rho", 0.5, float)
    reward_text = r.get("reward", "linear", str)
    y_min = r.get("y_min", -2.0, float)
    y_max = r.get("y_max", 2.0, float)
    points = r.get("points", 81, int)
    out = r.get("out", "-", str)
    if points < 1 or (points > 1 and not y_min < y_max):
        raise ConfigurationError("curve grid needs y_min < y_max and points >= 1")
    cfg = DiscountConfig(rho)
    ys = np.linspace(y_min, y_max, points)
    curve = sample_curve(function, cfg, ys, reward=_parse_reward(reward_text))
    rows = [[f"{y:.10g}", f"{v:.10g}"] for y, v in zip(curve.ys, curve.values)]
    _emit(out, _csv_text(["y", "value"], rows))
    _write_manifest("curves", r, out)
    return 0


def cmd_identity_suite(args: argparse.Namespace, config: dict[str, str]) -> int:
    r = _Resolver(args, config)
    n = r.get("n", 100_000, int)
    seed = r.get("seed", _default_seed(), int)
    beta = r.get("beta", 1.0, float)
    cells = r.get("grid_cells", 64, int)
    out = r.get("out", "-", str)
    if n < 1000:
        raise ConfigurationError("identity suite needs n >= 1000 for meaningful stderr")
    if cells < 1:
        raise ConfigurationError("grid_cells must be >= 1")
    grid = GridSpec(t_max=1.0, x_max=1.0, nt=cells, nx=cells)
    cfg = McConfig(n=n, rng=RngPolicy(seed), grid=grid)
    checks = []

    def record(name: str, est, target: float):
        z = _z_value(est.mean, est.stderr, target)
        checks.append(
            {"name": name, "estimate": est.mean, "stderr": est.stderr,
             "target": target, "z": z, "pass": bool(abs(z) <= Z_GATE)}
        )

    record("martingale", check_exponential_martingale(cfg, beta, 1.0, 1.0), 1.0)
    for label, phi in (
        ("isometry_const", lambda s, a: np.ones_like(s * a)),
        ("isometry_bilinear", lambda s, a: s * a),
        ("isometry_exp", lambda s, a: np.exp(-s - a)),
    ):
        left, right = check_isometry(cfg, phi, 1.0, 1.0)
        record(label, left, right.mean)
    record("second_moment_corner", check_second_moment(cfg, 1.0, 1.0), 1.0)
    record("second_moment_interior", check_second_moment(cfg, 0.5, 1.0), 0.5)
    ok = all(c["pass"] for c in checks)
    report = {"n": n, "seed": seed, "beta": beta, "grid_cells": cells,
              "checks": checks, "pass": ok}
    _emit(out, json.dumps(report, indent=2) + "\n")
    _write_manifest("identity-suite", r, out)
    return 0 if ok else 1


def _parse_payoff(text: str, ys: np.ndarray) -> np.ndarray:
    kind, _, arg = text.partition(":")
    if kind == "call":
        strike = float(arg) if arg else 1.0
        return np.maximum(ys - strike, 0.0)
    if kind == "spike":
        pos = float(arg) if arg else float(0.5 * (ys[0] + ys[-1]))
        vals = np.zeros_like(ys)
        vals[int(np.argmin(np.abs(ys - pos)))] = 1.0
        return vals
    if kind == "concave":
        mid = 0.5 * (ys[0] + ys[-1])
        peak = float(arg) if arg else 2.0
        return np.maximum(0.0, peak - (ys - mid) ** 2)
    raise ConfigurationError(f"unknown payoff {text!r}")


def cmd_majorant(args: argparse.Namespace, config: dict[str, str]) -> int:
    r = _Resolver(args, config)
    payoff = r.get("payoff", "call:1", str)
    y_min = r.get("y_min", 0.0, float)
    y_max = r.get("y_max", 2.0, float)
    nodes = r.get("nodes", 256, int)
    n_max = r.get("n_max", 50, int)
    epsilon = r.get("epsilon", 0.0, float)
    sigma = r.get("sigma", 1.0, float)
    ladder_levels = r.get("ladder_levels", 26, int)
    ladder_ratio = r.get("ladder_ratio", 2.0, float)
    out = r.get("out", "-", str)
    if nodes < 2 or not y_min < y_max:
        raise ConfigurationError("majorant grid needs y_min < y_max and nodes >= 2")
    ys = np.linspace(y_min, y_max, nodes)
    g = GridFunction(ys=ys, values=_parse_payoff(payoff, ys))
    sde = SdeConfig(
        sigma=sigma,
        variance_grid=default_variance_grid(g.width, levels=ladder_levels, ratio=ladder_ratio),
    )
    envelope = least_concave_majorant(g)
    iterates = iterate_gn(g, sde, n_max)
    final = iterates[-1]
    region = continuation_region(g, envelope, epsilon)
    rows = [
        [f"{y:.10g}", f"{gv:.10g}", f"{ev:.10g}", f"{fv:.10g}", int(m)]
        for y, gv, ev, fv, m in zip(ys, g.values, envelope.values, final.values, region.mask)
    ]
    inset = max(1, int(0.1 * nodes))
    interior = slice(inset, nodes - inset)
    gap = float(np.max(np.abs(final.values[interior] - envelope.values[interior])))
    hit = np.nonzero(region.mask)[0]
    summary = {
        "payoff": payoff,
        "nodes": nodes,
        "n_max": n_max,
        "epsilon": epsilon,
        "interior_sup_gap": gap,
        "region_node_count": int(region.mask.sum()),
        "region_endpoints": (
            [float(ys[hit[0]]), float(ys[hit[-1]])] if hit.size else None
        ),
    }
    _emit(out, _csv_text(["y", "g", "ghat_envelope", "g_n_final", "in_continuation"], rows))
    summary_text = json.dumps(summary, indent=2) + "\n"
    if out == "-":
        sys.stderr.write(summary_text)
    else:
        sys.stdout.write(summary_text)
    _write_manifest("majorant", r, out)
    return 0


def cmd_integrated_mc(args: argparse.Namespace, config: dict[str, str]) -> int:
    r = _Resolver(args, config)
    rho = r.get("rho", 0.5, float)
    y_texts = r.get("y", ["star"], str, multi=True)
    rule_text = r.get("rule", "axis:1", str)
    n = r.get("n", 20000, int)
    resolution = r.get("resolution", 256, int)
    seed = r.get("seed", _default_seed(), int)
    method = r.get("method", "bridge", str)
    out = r.get("out", "-", str)
    dcfg = DiscountConfig(rho)
    levels = [integrated_threshold(dcfg) if t == "star" else float(t) for t in y_texts]
    rule = HittingRule.parse(rule_text)
    rows = []
    all_pass = True
    for idx, y in enumerate(levels):
        cfg = McConfig(
            n=n, rule=rule, rng=RngPolicy(seed), substream_base=idx * n
        )
        est = estimate_integrated(cfg, rho, y, resolution=resolution, method=method)
        target = integrated_value(dcfg, y)
        z = _z_value(est.mean, est.stderr, target, allowance=0.02 * abs(target))
        all_pass &= abs(z) <= Z_GATE
        rows.append(
            [f"{y:.10g}", f"{est.mean:.10g}", f"{est.stderr:.6g}",
             f"{target:.10g}", f"{z:.4g}"]
        )
    _emit(out, _csv_text(["y", "estimate", "stderr", "target_F", "z_score"], rows))
    _write_manifest("integrated-mc", r, out)
    return 0 if all_pass else 1


def cmd_replay(args: argparse.Namespace, config: dict[str, str]) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    command = manifest["command"]
    if command not in _COMMANDS:
        raise ConfigurationError(f"manifest names unknown command {command!r}")
    params = manifest.get("parameters", {})
    replay_args = argparse.Namespace(**params)
    if args.out is not None:
        replay_args.out = args.out
    return _COMMANDS[command](replay_args, {})


_COMMANDS = {
    "laplace-check": cmd_laplace_check,
    "thresholds": cmd_thresholds,
    "curves": cmd_curves,
    "identity-suite": cmd_identity_suite,
    "majorant": cmd_majorant,
    "integrated-mc": cmd_integrated_mc,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sheetstop",
        description="Two-parameter optimal stopping toolkit: closed-form "
        "thresholds, Monte Carlo identity checks, and majorant extraction.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="key=value config file (flags override it)")
        p.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV_VAR} or 0)")
        p.add_argument("--out", help="output path, '-' for stdout (default)")

    p = sub.add_parser("laplace-check", help="hitting-point Laplace-transform identity")
    common(p)
    p.add_argument("--beta", nargs="+", help="transform parameters")
    p.add_argument("--y", nargs="+", help="hitting levels")
    p.add_argument("--rule", nargs="+", help="rules like axis:1 diagonal:1")
    p.add_argument("--n", type=int, help="replications per combo")
    p.add_argument("--crossing", choices=["bridge", "sign"])
    p.add_argument("--budget", type=float, help="clock budget before censoring")
    p.add_argument("--bias-frac", dest="bias_frac", type=float)

    p = sub.add_parser("thresholds", help="closed-form optimal levels and baselines")
    common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--reward", help="linear | power:N | exp:K")

    p = sub.add_parser("curves", help="sample a closed-form value curve as CSV")
    common(p)
    p.add_argument("--function", choices=["hitting", "integrated", "baseline"])
    p.add_argument("--rho", type=float)
    p.add_argument("--reward")
    p.add_argument("--y-min", dest="y_min", type=float)
    p.add_argument("--y-max", dest="y_max", type=float)
    p.add_argument("--points", type=int)

    p = sub.add_parser("identity-suite", help="martingale, isometry, and moment checks")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--grid-cells", dest="grid_cells", type=int)

    p = sub.add_parser("majorant", help="concave envelope, iterates, continuation region")
    common(p)
    p.add_argument("--payoff", help="call:K | spike[:pos] | concave[:peak]")
    p.add_argument("--y-min", dest="y_min", type=float)
    p.add_argument("--y-max", dest="y_max", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--ladder-levels", dest="ladder_levels", type=int)
    p.add_argument("--ladder-ratio", dest="ladder_ratio", type=float)

    p = sub.add_parser("integrated-mc", help="integrated discounted-field estimates")
    common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--y", nargs="+", help="levels; 'star' for the closed-form optimum")
    p.add_argument("--rule")
    p.add_argument("--n", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--method", choices=["bridge", "direct"])

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            return cmd_replay(args, {})
        config = _load_config(getattr(args, "config", None))
        return _COMMANDS[args.command](args, config)
    except (ConfigurationError, DomainError, BracketError, ConvergenceError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
