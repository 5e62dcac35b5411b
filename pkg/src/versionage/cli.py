"""Command line: flat key=value configs in, delimited tables out.

Config files are plain text, one ``section.key = value`` per line, ``#``
comments allowed.  Unknown keys are rejected by name.  All numeric output
uses one formatting policy (10 significant digits, plain decimal, ``inf``
token for unbounded rates), so identical config + seed always produces
byte-identical files.  Exit codes: 0 ok, 2 configuration error, 3 infeasible
or divergent result, 4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import decimal
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import analytic
from .core import (
    ConfigurationError,
    EnumerationCapError,
    InfeasibleSearchError,
    NoStableProfileError,
    SubscriptionProfile,
    SystemParams,
    Topology,
)
from .equilibrium import (
    AnalyticOracle,
    CostFunction,
    GeneralClass,
    LineClass,
    SearchSpec,
    SimOracle,
    StarClass,
    TreeClass,
    enumerate_stable_profiles,
    optimize_beta,
    server_preferred,
)
from .sim import SimConfig, estimate_ages

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INFEASIBLE = 3
EXIT_CAP_EXCEEDED = 4


def format_number(x: float) -> str:
    """10 significant digits, plain decimal expansion, inf/nan tokens."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.10g}"
    if "e" in s or "E" in s:
        s = format(decimal.Decimal(s), "f")
    if s == "-0":
        s = "0"
    return s


def format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return format_number(float(value))


@dataclass
class Table:
    """A fully formatted string matrix; CSV and JSON render the same cells."""

    columns: list[str]
    rows: list[list[str]] = field(default_factory=list)

    def add(self, *cells) -> None:
        row = [format_cell(c) for c in cells]
        if len(row) != len(self.columns):
            raise AssertionError(f"row width {len(row)} != {len(self.columns)}")
        self.rows.append(row)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return out.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns": self.columns, "rows": self.rows}, indent=2) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ConfigurationError(f"unknown output format {fmt!r}")


# ---------------------------------------------------------------------------
# configuration


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_choice(*allowed: str):
    def parse(text: str) -> str:
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return text

    return parse


def _parse_edges(text: str) -> tuple[tuple[int, int], ...]:
    edges = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        j, sep, i = part.partition("-")
        if not sep:
            raise ValueError(f"edge {part!r} must look like 'from-to'")
        edges.append((int(j), int(i)))
    if not edges:
        raise ValueError("edge list is empty")
    return tuple(edges)


def _parse_profile(text: str) -> str:
    bits = text.replace(",", "").replace(" ", "")
    if not bits or any(c not in "01" for c in bits):
        raise ValueError("profile must be a string of 0s and 1s")
    return bits


def _parse_points(text: str) -> tuple[tuple[float, float], ...]:
    points = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        b, sep, c = part.partition(":")
        if not sep:
            raise ValueError(f"point {part!r} must look like 'beta:cost'")
        points.append((float(b), float(c)))
    return tuple(points)


def _parse_networks(text: str) -> tuple[str, ...]:
    nets = tuple(part.strip() for part in text.split(",") if part.strip())
    for net in nets:
        if net not in ("line", "tree", "star", "general"):
            raise ValueError(f"unknown network {net!r}")
    if not nets:
        raise ValueError("network list is empty")
    return nets


@dataclass
class RunConfig:
    p_e: float | None = None
    beta: float | None = None
    p: float | None = None
    L: float | None = None
    topology_class: str | None = None
    n: int | None = None
    r: int | None = None
    depth: int | None = None
    edges: tuple[tuple[int, int], ...] | None = None
    profile: str | None = None
    horizon: int | None = None
    replications: int | None = None
    burn_in: int | None = None
    workers: int | None = None
    seed: int | None = None
    cost_kind: str | None = None
    cost_c0: float | None = None
    cost_points: tuple[tuple[float, float], ...] | None = None
    sweep_variable: str | None = None
    sweep_from: float | None = None
    sweep_to: float | None = None
    sweep_steps: int | None = None
    cap: int | None = None
    margin_tol: float | None = None
    k_min: int | None = None
    k_max: int | None = None
    beta_min: float | None = None
    networks: tuple[str, ...] | None = None
    grid_from: float | None = None
    grid_to: float | None = None
    grid_steps: int | None = None
    output_path: str | None = None
    output_format: str | None = None
    report_kind: str | None = None


_KEYS = {
    "params.p_e": ("p_e", _parse_float),
    "params.beta": ("beta", _parse_float),
    "params.p": ("p", _parse_float),
    "params.L": ("L", _parse_float),
    "topology.class": ("topology_class", _parse_choice("line", "tree", "star", "general")),
    "topology.n": ("n", _parse_int),
    "topology.r": ("r", _parse_int),
    "topology.depth": ("depth", _parse_int),
    "topology.edges": ("edges", _parse_edges),
    "profile.actions": ("profile", _parse_profile),
    "sim.horizon": ("horizon", _parse_int),
    "sim.replications": ("replications", _parse_int),
    "sim.burn_in": ("burn_in", _parse_int),
    "sim.workers": ("workers", _parse_int),
    "seed": ("seed", _parse_int),
    "cost.kind": ("cost_kind", _parse_choice("quadratic", "linear", "table")),
    "cost.c0": ("cost_c0", _parse_float),
    "cost.points": ("cost_points", _parse_points),
    "sweep.variable": ("sweep_variable", _parse_choice("beta")),
    "sweep.from": ("sweep_from", _parse_float),
    "sweep.to": ("sweep_to", _parse_float),
    "sweep.steps": ("sweep_steps", _parse_int),
    "equilibrium.cap": ("cap", _parse_int),
    "equilibrium.margin_tol": ("margin_tol", _parse_float),
    "optimize.k_min": ("k_min", _parse_int),
    "optimize.k_max": ("k_max", _parse_int),
    "optimize.beta_min": ("beta_min", _parse_float),
    "optimize.networks": ("networks", _parse_networks),
    "optimize.grid_from": ("grid_from", _parse_float),
    "optimize.grid_to": ("grid_to", _parse_float),
    "optimize.grid_steps": ("grid_steps", _parse_int),
    "output.path": ("output_path", str),
    "output.format": ("output_format", _parse_choice("csv", "json")),
    "report.kind": ("report_kind", _parse_choice("age_profile", "staircase", "comparison")),
}


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate config key {key!r}")
        seen.add(key)
        attr, parse = _KEYS[key]
        try:
            setattr(cfg, attr, parse(value))
        except (ValueError, decimal.InvalidOperation) as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def _need(value, key: str):
    if value is None:
        raise ConfigurationError(f"missing required config key {key}")
    return value


def _system_params(cfg: RunConfig) -> SystemParams:
    return SystemParams(
        p_e=_need(cfg.p_e, "params.p_e"),
        beta=_need(cfg.beta, "params.beta"),
        p=_need(cfg.p, "params.p"),
        L=_need(cfg.L, "params.L"),
    )


def _topology(cfg: RunConfig) -> Topology:
    kind = _need(cfg.topology_class, "topology.class")
    if kind == "line":
        return Topology.line(_need(cfg.n, "topology.n"))
    if kind == "tree":
        return Topology.tree(_need(cfg.r, "topology.r"), _need(cfg.depth, "topology.depth"))
    if kind == "star":
        return Topology.star(_need(cfg.r, "topology.r"))
    return Topology.general(_need(cfg.n, "topology.n"), _need(cfg.edges, "topology.edges"))


def _sim_config(cfg: RunConfig, seed: int) -> SimConfig:
    return SimConfig(
        horizon=_need(cfg.horizon, "sim.horizon"),
        replications=_need(cfg.replications, "sim.replications"),
        master_seed=seed,
        burn_in=cfg.burn_in,
        workers=cfg.workers if cfg.workers is not None else 1,
    )


def _cost(cfg: RunConfig) -> CostFunction:
    kind = cfg.cost_kind
    if kind is None or kind == "quadratic":
        return CostFunction.quadratic(cfg.cost_c0 if cfg.cost_c0 is not None else 0.0)
    if kind == "linear":
        return CostFunction.linear(cfg.cost_c0 if cfg.cost_c0 is not None else 0.0)
    return CostFunction.table(_need(cfg.cost_points, "cost.points"))


def _search(cfg: RunConfig) -> SearchSpec:
    return SearchSpec(
        k_min=cfg.k_min if cfg.k_min is not None else 1,
        k_max=cfg.k_max,
        beta_min=cfg.beta_min if cfg.beta_min is not None else 1e-3,
        cap=cfg.cap if cfg.cap is not None else 16,
    )


def _profile(cfg: RunConfig, topology: Topology, params: SystemParams) -> SubscriptionProfile:
    if cfg.profile is not None:
        prof = SubscriptionProfile.from_string(cfg.profile)
        if prof.n != topology.n:
            raise ConfigurationError(
                f"profile.actions has {prof.n} entries but topology has {topology.n} nodes"
            )
        return prof
    if topology.kind == "line":
        return analytic.line_periodic_profile(topology.n, analytic.line_k_star(params))
    if topology.kind == "tree":
        return analytic.tree_level_profile(topology, analytic.line_k_star(params))
    if topology.kind == "star":
        return analytic.star_regime(params.beta, params, topology.r).profile
    raise ConfigurationError("profile.actions is required for a general topology")


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(cfg: RunConfig) -> tuple[Table, int]:
    """Closed-form table for the configured topology class."""
    params = _system_params(cfg)
    kind = _need(cfg.topology_class, "topology.class")
    table = Table(["node_or_k", "value", "formula_id", "reason"])
    if kind == "general":
        raise ConfigurationError(
            "no closed forms for a general topology; run `simulate` instead"
        )
    if kind in ("line", "tree"):
        K = analytic.line_k_star(params)
        if kind == "line":
            for k in range(K):
                table.add(k, analytic.line_node_age(k, params), "line_node_age", "")
            table.add("K", K, "line_k_star", "")
            table.add("F_S", analytic.line_fs(params), "line_fs", "")
        else:
            r = _need(cfg.r, "topology.r")
            table.add("K", K, "line_k_star", "")
            table.add("cell_size", analytic.tree_cell_size(params, r), "tree_cell_size", "")
            table.add("F_S", analytic.tree_fs(params, r), "tree_fs", "")
        if params.L > 1.0:
            rate = analytic.line_beta_star(K, params)
            table.add("beta_star_K", rate.value, "line_beta_star", rate.reason)
        return table, EXIT_OK
    # star
    r = _need(cfg.r, "topology.r")
    if params.L > 1.0:
        thresholds = analytic.star_thresholds(params, r)
        for k, rate in enumerate(thresholds.beta_k, start=1):
            table.add(f"beta_{k}", rate.value, "star_thresholds", rate.reason)
        table.add("beta_c", thresholds.beta_c.value, "star_thresholds", thresholds.beta_c.reason)
    regime = analytic.star_regime(params.beta, params, r)
    table.add("regime", regime.regime.value, "star_regime", "")
    table.add("regime_k", regime.k, "star_regime", "")
    table.add("F_S", regime.f_s, "star_regime", "")
    table.add("center_only_stable", regime.center_only_stable, "star_regime", "")
    table.add("profile", regime.profile.to_string(), "star_regime", "")
    return table, EXIT_OK


def cmd_simulate(cfg: RunConfig, seed: int) -> tuple[Table, int]:
    """Monte Carlo per-node age estimates for the configured profile."""
    params = _system_params(cfg)
    topology = _topology(cfg)
    profile = _profile(cfg, topology, params)
    estimate = estimate_ages(topology, profile, params, _sim_config(cfg, seed))
    table = Table(["node", "action", "mean", "ci_half_width", "divergent"])
    for i in range(topology.n):
        table.add(
            i,
            int(profile.actions[i]),
            float(estimate.mean[i]),
            float(estimate.ci_half_width[i]),
            bool(estimate.divergent[i]),
        )
    if estimate.any_divergent:
        print("warning: divergent nodes present (no path from any subscriber)", file=sys.stderr)
        return table, EXIT_INFEASIBLE
    return table, EXIT_OK


def cmd_equilibria(cfg: RunConfig, seed: int) -> tuple[Table, int]:
    """Exhaustive stable-profile table; statistical oracle for general graphs."""
    params = _system_params(cfg)
    topology = _topology(cfg)
    cap = cfg.cap if cfg.cap is not None else 16
    tol = cfg.margin_tol if cfg.margin_tol is not None else 0.0
    if topology.kind == "general":
        oracle = SimOracle(_sim_config(cfg, seed))
    else:
        oracle = AnalyticOracle()
    verdicts = enumerate_stable_profiles(topology, params, oracle, cap=cap, margin_tol=tol)
    table = Table(["profile", "subscribers", "f_s", "preferred"])
    if not verdicts:
        print("warning: no AC-stable profile exists at these parameters", file=sys.stderr)
        return table, EXIT_INFEASIBLE
    preferred, _ = server_preferred(v.profile for v in verdicts)
    for v in verdicts:
        table.add(
            v.profile.to_string(),
            v.profile.subscriber_count,
            v.profile.fraction(),
            v.profile.actions == preferred.actions,
        )
    return table, EXIT_OK


def _topology_classes(cfg: RunConfig, seed: int):
    nets = cfg.networks
    if nets is None:
        nets = (_need(cfg.topology_class, "topology.class"),)
    out = []
    for net in nets:
        if net == "line":
            out.append(("line", LineClass(n=cfg.n)))
        elif net == "tree":
            out.append(("tree", TreeClass(r=_need(cfg.r, "topology.r"), depth=cfg.depth)))
        elif net == "star":
            out.append(("star", StarClass(r=_need(cfg.r, "topology.r"))))
        else:
            topology = _topology(cfg)
            lo = _need(cfg.grid_from, "optimize.grid_from")
            hi = _need(cfg.grid_to, "optimize.grid_to")
            steps = _need(cfg.grid_steps, "optimize.grid_steps")
            grid = _beta_grid(lo, hi, steps)
            oracle = None
            if topology.kind == "general":
                oracle = SimOracle(_sim_config(cfg, seed))
            out.append(("general", GeneralClass(topology, grid, oracle=oracle)))
    return out


def _beta_grid(lo: float, hi: float, steps: int) -> tuple[float, ...]:
    if steps < 1:
        raise ConfigurationError(f"grid needs at least one step, got {steps}")
    if not (0.0 < lo <= hi <= 1.0):
        raise ConfigurationError(f"grid range must satisfy 0 < from <= to <= 1, got [{lo}, {hi}]")
    if steps == 1:
        return (lo,)
    return tuple(lo + i * (hi - lo) / (steps - 1) for i in range(steps))


def cmd_optimize(cfg: RunConfig, seed: int) -> tuple[Table, int]:
    """Best sampling rate per network, with the full candidate table."""
    params = _system_params(cfg)
    cost = _cost(cfg)
    search = _search(cfg)
    table = Table(["network", "label", "beta", "f_s", "utility", "selected"])
    for name, topology_class in _topology_classes(cfg, seed):
        report = optimize_beta(topology_class, params, cost, search)
        for cand in report.candidates:
            table.add(
                name,
                cand.label,
                cand.beta,
                cand.f_s,
                cand.utility,
                cand.label == report.label,
            )
    return table, EXIT_OK


def cmd_sweep(cfg: RunConfig) -> tuple[Table, int]:
    """K / F_S / regime versus beta over the configured grid."""
    params = _system_params(cfg)
    kind = _need(cfg.topology_class, "topology.class")
    if kind == "general":
        raise ConfigurationError("sweep needs a tagged topology class (line, tree, or star)")
    _need(cfg.sweep_variable, "sweep.variable")
    lo = _need(cfg.sweep_from, "sweep.from")
    hi = _need(cfg.sweep_to, "sweep.to")
    steps = _need(cfg.sweep_steps, "sweep.steps")
    table = Table(["beta", "K_or_k", "f_s", "regime"])
    for beta in _beta_grid(lo, hi, steps):
        run = params.with_beta(beta)
        if kind == "line":
            table.add(beta, analytic.line_k_star(run), analytic.line_fs(run), "")
        elif kind == "tree":
            r = _need(cfg.r, "topology.r")
            table.add(beta, analytic.line_k_star(run), analytic.tree_fs(run, r), "")
        else:
            r = _need(cfg.r, "topology.r")
            regime = analytic.star_regime(beta, run, r)
            table.add(beta, regime.k, regime.f_s, regime.regime.value)
    return table, EXIT_OK


def cmd_report(cfg: RunConfig, seed: int, output: str, fmt: str) -> tuple[Table, int]:
    """Table plus rendered figure, written side by side under one stem."""
    from . import figures

    kind = _need(cfg.report_kind, "report.kind")
    png_path = str(Path(output).with_suffix(".png"))
    if kind == "age_profile":
        params = _system_params(cfg)
        topology = _topology(cfg)
        if topology.kind != "line":
            raise ConfigurationError("report.kind age_profile needs topology.class line")
        profile = _profile(cfg, topology, params)
        ages = analytic.profile_ages(topology, profile, params)
        estimate = estimate_ages(topology, profile, params, _sim_config(cfg, seed))
        table = Table(["node", "action", "analytic", "simulated", "ci_half_width"])
        for i in range(topology.n):
            table.add(
                i,
                int(profile.actions[i]),
                ages[i],
                float(estimate.mean[i]),
                float(estimate.ci_half_width[i]),
            )
        figures.age_profile_figure(
            list(range(topology.n)),
            list(ages),
            [float(v) for v in estimate.mean],
            [float(v) for v in estimate.ci_half_width],
            png_path,
        )
        code = EXIT_INFEASIBLE if estimate.any_divergent else EXIT_OK
        return table, code
    if kind == "staircase":
        table, code = cmd_sweep(cfg)
        betas = [float(row[0]) for row in table.rows]
        ks = [int(row[1]) for row in table.rows]
        fss = [float(row[2]) for row in table.rows]
        figures.staircase_figure(betas, ks, fss, png_path)
        return table, code
    # comparison
    table, code = cmd_optimize(cfg, seed)
    networks, betas, fss, utils = [], [], [], []
    for row in table.rows:
        if row[5] == "1":
            networks.append(row[0])
            betas.append(float(row[2]))
            fss.append(float(row[3]))
            utils.append(float(row[4]))
    figures.comparison_figure(networks, betas, fss, utils, png_path)
    return table, code


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="versionage",
        description="Version-age gossip: closed forms, Monte Carlo, equilibria, rate optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("analyze", "closed-form ages, spacings, and thresholds"),
        ("simulate", "Monte Carlo age estimates"),
        ("equilibria", "exhaustive stable-profile enumeration"),
        ("optimize", "best committed sampling rate"),
        ("sweep", "K / F_S / regime over a beta grid"),
        ("report", "table plus rendered figure"),
    ):
        cmd = sub.add_parser(name, help=doc)
        cmd.add_argument("--config", required=True, help="path to key=value config file")
        cmd.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        cmd.add_argument("--output", default=None, help="write the table here instead of stdout")
        cmd.add_argument("--format", choices=("csv", "json"), default=None, help="table format")
    return parser


def _ensure_parent(output: str) -> None:
    parent = Path(output).parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {parent}: {exc}") from exc


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else (cfg.seed if cfg.seed is not None else 0)
        output = args.output if args.output is not None else cfg.output_path
        fmt = args.format if args.format is not None else (cfg.output_format or "csv")

        if args.command == "analyze":
            table, code = cmd_analyze(cfg)
        elif args.command == "simulate":
            table, code = cmd_simulate(cfg, seed)
        elif args.command == "equilibria":
            table, code = cmd_equilibria(cfg, seed)
        elif args.command == "optimize":
            table, code = cmd_optimize(cfg, seed)
        elif args.command == "sweep":
            table, code = cmd_sweep(cfg)
        else:
            if output is None:
                raise ConfigurationError("report needs --output (or output.path) for its files")
            _ensure_parent(output)
            table, code = cmd_report(cfg, seed, output, fmt)

        text = table.render(fmt)
        if output is None:
            sys.stdout.write(text)
        else:
            _ensure_parent(output)
            Path(output).write_text(text)
        return code
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP_EXCEEDED
    except (NoStableProfileError, InfeasibleSearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
