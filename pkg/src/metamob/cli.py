"""``metamob`` command line: simulate, build-net, analyze, randomize.

Exit codes: 0 success, 1 usage or configuration error, 2 input data error,
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from . import analysis as A
from .core import (GridParseError, GridSpec, Quantity, Trajectory, canonicalize_trajectories,
                   flatten, grid_id)
from .fitting import DegenerateDistributionError, InsufficientDataError, fit_loglog_ols
from .io import (EventLog, TrajectoryFormatError, dumps, parse_mapping, read_events,
                 read_network, write_curve, write_events, write_network)
from .network import (build_network, contract_jump_distances, neighborhood_visitor_average,
                      randomize_trajectories)
from .simulate import ConfigError, SimConfig, run_simulation

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
TOOL = "metamob"
DAY_SECONDS = 86400


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def worker_count() -> int:
    """Validated ``METAMOB_THREADS`` (0 or unset means auto).

    Work is done by a single worker whatever the value; the variable is
    still checked so that a bad setting fails loudly.
    """
    raw = os.environ.get("METAMOB_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"METAMOB_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"METAMOB_THREADS must be a non-negative integer, got {raw!r}")
    return n


# simulate

_SIM_FLAGS = (
    ("model", str), ("agents", int), ("locations", int), ("steps", int),
    ("moves_per_activation", int), ("rho", float), ("gamma", float), ("epsilon", float),
    ("activation", str), ("grid", str), ("jump_exponent", float), ("seed", int),
    ("rejection_cap", int),
)


def load_run_config(path: str | None, overrides: dict[str, Any]) -> tuple[SimConfig, str | None]:
    """Merge a JSON run config with command-line overrides.

    The JSON object may hold any ``SimConfig`` field plus ``output``;
    anything else is rejected.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {path} must be a JSON object")
    output = data.pop("output", None)
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "must be a path string")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = SimConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    return cfg, output


def cmd_simulate(args: argparse.Namespace) -> int:
    overrides = {name: getattr(args, name) for name, _ in _SIM_FLAGS}
    cfg, cfg_out = load_run_config(args.config, overrides)
    out = args.out or cfg_out or "-"
    result = run_simulation(cfg)
    placed = cfg.agents
    if result.table.total_count != placed + len(result.events):
        raise InvariantError("popularity counts do not match placements plus moves")
    meta = {"tool": TOOL, "version": __version__, "time_unit": "step", **result.metadata()}
    _write(lambda: write_events(out, result.events, meta), out)
    return EXIT_OK


def _write(fn: Callable[[], Any], target: str | Path) -> Any:
    try:
        return fn()
    except OSError as exc:
        raise UsageError(f"cannot write {target}: {exc.strerror}") from None


# shared input handling

def _load(path: str, mapping: str | None, fmt: str | None) -> tuple[EventLog, dict[str, Trajectory]]:
    try:
        cols = parse_mapping(mapping)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        log = read_events(path, cols, fmt)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not UTF-8 text") from None
    return log, canonicalize_trajectories(log.events)


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="trajectory file (NDJSON or CSV with header), '-' for stdin")
    p.add_argument("--map", metavar="agent=COL,t=COL,loc=COL",
                   help="column names to read agent, time and location from")
    p.add_argument("--format", choices=("ndjson", "csv"), help="input format (default: sniffed)")


# build-net

def cmd_build_net(args: argparse.Namespace) -> int:
    _, trajs = _load(args.input, args.map, args.format)
    if not trajs:
        print(f"warning: {args.input} holds no events; writing empty tables", file=sys.stderr)
    net = build_network(trajs, directed=args.directed)
    expected = sum(t.n - 1 for t in trajs.values())
    if net.total_transitions != expected:
        raise InvariantError("network transitions do not match trajectory transitions")
    edge_path, node_path = _write(lambda: write_network(net, args.out), args.out)
    attr = "weight_agents" if args.weight == "agents" else "weight_events"
    max_w = max((getattr(e, attr) for e in net.edges.values()), default=0)
    print(f"nodes {len(net.nodes)}")
    print(f"edges {len(net.edges)}")
    print(f"total transitions {net.total_transitions}")
    print(f"max {attr} {max_w}")
    print(f"wrote {edge_path} {node_path}")
    return EXIT_OK


# randomize

def _world(log: EventLog, trajs: dict[str, Trajectory]) -> list[str]:
    cfg = (log.meta or {}).get("config") if isinstance(log.meta, dict) else None
    if isinstance(cfg, dict):
        if isinstance(cfg.get("grid"), str):
            g = GridSpec.parse(cfg["grid"])
            return [grid_id(*g.index_to_xy(i)) for i in range(g.cell_count)]
        if isinstance(cfg.get("locations"), int) and cfg["locations"] > 0:
            return [f"L{i}" for i in range(cfg["locations"])]
    return sorted({ev.loc for t in trajs.values() for ev in t.events})


def cmd_randomize(args: argparse.Namespace) -> int:
    log, trajs = _load(args.input, args.map, args.format)
    if not trajs:
        print(f"warning: {args.input} holds no events", file=sys.stderr)
        world: list[str] = []
        out_trajs: dict[str, Trajectory] = {}
    else:
        try:
            world = _world(log, trajs)
        except ValueError as exc:
            raise DataError(f"bad grid in input metadata: {exc}") from None
        out_trajs = randomize_trajectories(trajs, world, args.seed)
    time_unit = (log.meta or {}).get("time_unit", "second") if isinstance(log.meta, dict) else "second"
    meta = {"tool": TOOL, "version": __version__, "time_unit": time_unit,
            "randomized": {"seed": args.seed, "world_size": len(world), "source": log.meta}}
    _write(lambda: write_events(args.out, flatten(out_trajs), meta), args.out)
    return EXIT_OK


# analyze

class Report:
    def __init__(self):
        self.fits: dict[str, Any] = {}
        self.comparison: dict[str, Any] = {}
        self.metrics: dict[str, Any] = {}
        self.skipped: list[dict[str, str]] = []
        self.warnings: list[str] = []
        self.curves: dict[str, Any] = {}

    def skip(self, name: str, reason: str) -> None:
        self.skipped.append({"name": name, "reason": reason})

    def attempt(self, name: str, fn: Callable[[], Any]) -> Any:
        """Run one analysis, recording it as skipped if the data cannot support it."""
        try:
            return fn()
        except (InsufficientDataError, DegenerateDistributionError) as exc:
            self.skip(name, str(exc))
            return None

    def distribution(self, name: str, dist: A.DistributionFit | None, threshold: float = 0.3):
        if dist is None:
            return
        self.fits[name] = dist.mle.to_dict()
        entry = {"mle": dist.mle.to_dict(), "ols": None if dist.ols is None else dist.ols.to_dict(),
                 "disagreement": dist.disagreement}
        self.comparison[name] = entry
        if dist.disagreement is not None and dist.disagreement > threshold:
            self.warnings.append(f"{name}: MLE and OLS exponents differ by "
                                 f"{dist.disagreement:.3f} (> {threshold})")

    def to_dict(self, header: dict[str, Any]) -> dict[str, Any]:
        return {**header, "fits": self.fits, "estimator_comparison": self.comparison,
                "metrics": self.metrics, "skipped": self.skipped, "warnings": self.warnings}


def _curve_fit(report: Report, name: str, cf: A.CurveFit | None, **extra: Any) -> None:
    if cf is None:
        return
    report.fits[name] = cf.fit.to_dict()
    report.curves[name] = cf.curve
    if extra:
        report.metrics[name] = extra


def analyze(log: EventLog, trajs: dict[str, Trajectory], grid: GridSpec | None, window: int,
            net_prefix: str | None = None, directed: bool = True,
            weight: str = "agents") -> Report:
    report = Report()
    if not trajs:
        report.skip("all", "no events")
        return report
    if net_prefix is not None:
        try:
            net = read_network(net_prefix, directed=directed)
        except OSError as exc:
            raise DataError(f"cannot read network {net_prefix}: {exc.strerror}") from None
    else:
        net = build_network(trajs, directed=directed)
    report.metrics["network"] = {
        "nodes": len(net.nodes), "edges": len(net.edges),
        "total_transitions": net.total_transitions,
        "max_weight_events": max((e.weight_events for e in net.edges.values()), default=0),
        "max_weight_agents": max((e.weight_agents for e in net.edges.values()), default=0),
    }

    report.distribution("visitors", report.attempt("visitors", lambda: A.visitor_distribution(net)))
    bundle = report.attempt("degree", lambda: A.degree_visitor_scaling(net, weight))
    if bundle is not None:
        report.distribution("degree", bundle.degree)
        report.distribution("weight", bundle.weight)
        report.fits["degree_visitors"] = bundle.scaling.to_dict()
        report.metrics["isolated_nodes"] = bundle.isolated
        report.metrics["weight_kind"] = weight

    _curve_fit(report, "exploration", report.attempt("exploration", lambda: A.exploration_curve(trajs)))
    rf = report.attempt("rank_frequency", lambda: A.rank_frequency(trajs))
    _curve_fit(report, "rank_frequency", rf, excluded_single_location=rf.excluded if rf else 0)
    fl = report.attempt("fluctuation",
                        lambda: A.fluctuation_scaling(A.all_agent_stats(trajs)))
    if fl is not None:
        report.fits["fluctuation"] = fl.fit.to_dict()
        report.metrics["fluctuation"] = {"excluded_single_location": fl.excluded_single,
                                         "excluded_zero_sigma": fl.excluded_zero_sigma}
    _curve_fit(report, "gamma", report.attempt("gamma", lambda: A.estimate_gamma(trajs)))
    _curve_fit(report, "preferential",
               report.attempt("preferential", lambda: A.preferential_check(trajs, window)))

    rp = A.return_probability(trajs, window)
    report.metrics["return_probability"] = {"window": window, "overall": rp.overall,
                                            "by_window": rp.by_window,
                                            "moves_by_window": rp.moves_by_window}
    ret = report.attempt("retention_rate", lambda: A.retention_rate(trajs))
    if ret is not None:
        report.metrics["retention_rate"] = ret
    report.metrics["top_share_1pct"] = A.top_share(net, 0.01)
    ginis = A.visitation_gini(trajs)
    report.metrics["visitation_gini"] = {"mean": statistics.fmean(ginis),
                                         "median": statistics.median(ginis)}

    if grid is None:
        for name in ("teleport_fraction", "jump_lengths", "ranked_distance", "neighborhood"):
            report.skip(name, "requires --grid bounds")
        hist = contract_jump_distances(trajs, net)
        report.metrics["network_jump_distance"] = {str(k): v for k, v in hist.items()}
    else:
        report.skip("network_jump_distance", "grid data uses Manhattan jump distances")
        report.metrics["teleport_fraction"] = A.teleport_fraction(trajs, grid, 10)
        rd = A.ranked_distance(trajs, grid)
        report.curves["ranked_distance"] = rd.curve
        report.metrics["ranked_distance"] = {"by_rank": rd.by_rank,
                                             "excluded_single_location": rd.excluded}
        if rd.fit is None:
            report.skip("ranked_distance_fit", "too few ranked bins")
        else:
            report.fits["ranked_distance"] = rd.fit.to_dict()
        nb = neighborhood_visitor_average(trajs, grid)
        report.metrics["neighborhood"] = {"rows": len(nb.rows), "omitted": nb.omitted}
        pairs = [(avg, n) for _, n, avg in nb.rows]
        fit = report.attempt("neighborhood", lambda: fit_loglog_ols(pairs, Quantity.NEIGHBORHOOD))
        if fit is not None:
            report.fits["neighborhood"] = fit.to_dict()
    cfg = (log.meta or {}).get("config") if isinstance(log.meta, dict) else None
    if isinstance(cfg, dict) and isinstance(cfg.get("gamma"), (int, float)):
        report.metrics["analytic_mu"] = A.analytic_mu(cfg["gamma"])
    return report


def _time_unit(log: EventLog) -> str:
    if isinstance(log.meta, dict):
        return str(log.meta.get("time_unit", "second"))
    return "second"


def cmd_analyze(args: argparse.Namespace) -> int:
    log, trajs = _load(args.input, args.map, args.format)
    grid = None
    if args.grid is not None:
        try:
            grid = GridSpec.parse(args.grid)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    window = args.window
    if window is None:
        window = 1 if _time_unit(log) == "step" else DAY_SECONDS
    if window < 1:
        raise UsageError("--window must be >= 1")
    try:
        report = analyze(log, trajs, grid, window, args.net, args.directed, args.weight)
    except GridParseError as exc:
        raise DataError(f"{exc} (is --grid right for this data?)") from None
    if not report.fits and not report.metrics:
        raise DataError("no applicable metric for this input")
    header = {"tool": TOOL, "version": __version__,
              "input": {"path": args.input, "agents": len(trajs),
                        "events": sum(t.n for t in trajs.values()),
                        "generated": log.generated, "window": window,
                        "grid": None if grid is None else grid.format()}}
    text = dumps(report.to_dict(header), indent=2) + "\n"
    if args.curves:
        curve_dir = Path(args.curves)
        _write(lambda: curve_dir.mkdir(parents=True, exist_ok=True), curve_dir)
        for name, curve in sorted(report.curves.items()):
            path = curve_dir / f"{name}.csv"
            _write(lambda: write_curve(path, curve), path)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)

    def emit():
        if args.report == "-":
            sys.stdout.write(text)
            sys.stdout.flush()
        else:
            Path(args.report).write_text(text, encoding="utf-8")
    _write(emit, args.report)
    return EXIT_OK


# parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=TOOL, description="Metaverse mobility simulation and analysis.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate synthetic trajectories")
    p.add_argument("--config", help="JSON run config (SimConfig fields plus 'output')")
    for name, typ in _SIM_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("-o", "--out", help="output NDJSON path, '-' for stdout (default)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-net", help="build edge and node tables")
    _add_input(p)
    p.add_argument("-o", "--out", required=True, metavar="PREFIX",
                   help="writes PREFIX.edges.csv and PREFIX.nodes.csv")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--directed", dest="directed", action="store_true", default=True)
    g.add_argument("--undirected", dest="directed", action="store_false")
    p.add_argument("--weight", choices=("events", "agents"), default="agents",
                   help="edge weight reported in the summary")
    p.set_defaults(func=cmd_build_net)

    p = sub.add_parser("analyze", help="fit scaling laws and compute metrics")
    _add_input(p)
    p.add_argument("--net", metavar="PREFIX", help="read a prebuilt network instead of building one")
    p.add_argument("--grid", metavar="X0:X1,Y0:Y1", help="grid bounds; enables spatial metrics")
    p.add_argument("--window", type=int,
                   help="time window length (default: 1 step for generated data, 86400 otherwise)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--directed", dest="directed", action="store_true", default=True)
    g.add_argument("--undirected", dest="directed", action="store_false")
    p.add_argument("--weight", choices=("events", "agents"), default="agents",
                   help="edge weight used for the weight distribution")
    p.add_argument("--report", default="-", help="JSON report path, '-' for stdout (default)")
    p.add_argument("--curves", metavar="DIR", help="directory for per-curve CSVs")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("randomize", help="location-randomized null trajectories")
    _add_input(p)
    p.add_argument("-o", "--out", default="-", help="output NDJSON path, '-' for stdout")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_randomize)
    return parser


def _join_grid(argv: Sequence[str]) -> list[str]:
    """Glue ``--grid VALUE`` together: bounds such as ``-150:150,...`` look like flags."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok == "--grid":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--grid={nxt}")
        else:
            out.append(tok)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_grid(sys.argv[1:] if argv is None else argv))
    try:
        worker_count()
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrajectoryFormatError as exc:
        print(f"{TOOL}: input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, GridParseError) as exc:
        print(f"{TOOL}: input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"{TOOL}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        # canonicalization and network readers report bad records this way
        print(f"{TOOL}: input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug, not bad input
        print(f"{TOOL}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
