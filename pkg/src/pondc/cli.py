"""Command-line front end.

Exit codes: 0 success, 1 domain error, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .addressing import derive_address_plan, plan_from_csv, plan_to_csv, validate_plan
from .config import JitterModel, ProbeConfig
from .errors import InvalidArgument, ParseError, PonError, Unreachable, ValidationError
from .probes import (
    aggregate_to_csv,
    compare_scaling,
    comparison_summary,
    comparison_to_csv,
    figure6_csv,
    figure7_csv,
    ping,
    samples_to_csv,
    traceroute,
)
from .routing import compute_forwarding_tables, route, routes_to_csv
from .simcore import engine_for
from .topo import default_endpoints, resolve_scenario, save_scenario, validate_topology

log = logging.getLogger("pondc")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
SEED_ENV = "SIM_SEED"


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _load(ref: str):
    try:
        return resolve_scenario(ref)
    except (OSError, ParseError, InvalidArgument) as exc:
        raise _Fail(EXIT_USAGE, f"cannot load scenario {ref!r}: {exc}") from exc
    except ValidationError as exc:
        raise _Fail(EXIT_DOMAIN, f"scenario {ref!r} is invalid: {exc}") from exc


def _seed(args, scenario) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise _Fail(EXIT_USAGE, f"{SEED_ENV}={env!r} is not an integer") from None
    return scenario.seed


def _write(out: Path, name: str, text: str, written: list[str]) -> None:
    path = out / name
    path.write_text(text, encoding="utf-8", newline="\n")
    written.append(str(path))


def _manifest(out: Path, args, scenario_ref: str, seed: int, outputs: list[str], started: str) -> None:
    doc = {
        "command": args.command,
        "argv": list(args.argv),
        "scenario": scenario_ref,
        "seed": seed,
        "outputs": outputs,
        "version": __version__,
        "started_at": started,
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8", newline="\n")


def _endpoints(args, topology) -> tuple[str, str]:
    src, dst = default_endpoints(topology)
    src = args.src or src
    dst = args.dst or dst
    for nid in (src, dst):
        if nid not in topology.nodes:
            raise _Fail(EXIT_DOMAIN, f"unknown node {nid!r}")
    return src, dst


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    topo = scenario.topology
    violations = list(validate_topology(topo))
    if args.plan:
        try:
            plan = plan_from_csv(Path(args.plan).read_text(encoding="utf-8"), topo)
        except (OSError, ValueError) as exc:
            raise _Fail(EXIT_USAGE, f"cannot read plan {args.plan!r}: {exc}") from exc
    else:
        plan = derive_address_plan(topo)
    violations.extend(validate_plan(plan, topo))
    for v in violations:
        print(v)
    return EXIT_DOMAIN if violations else EXIT_OK


def cmd_traceroute(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    scenario = _load(args.scenario)
    seed = _seed(args, scenario)
    base = scenario.probe_config
    cfg = ProbeConfig(
        args.iterations or base.iterations,
        args.probes or base.probes_per_run,
        base.probe_size_bytes,
        base.inter_probe_gap_us,
    )
    src, dst = _endpoints(args, scenario.topology)
    engine = engine_for(scenario, seed=seed)
    report = traceroute(engine, src, dst, cfg)
    if not report.hops and src != dst:
        raise _Fail(EXIT_DOMAIN, f"{dst!r} is unreachable from {src!r}")
    out = _outdir(args.out)
    written: list[str] = []
    _write(out, "probes.csv", samples_to_csv(report), written)
    _write(out, "aggregate.csv", aggregate_to_csv(report), written)
    _manifest(out, args, args.scenario, seed, written, started)
    return EXIT_OK


def cmd_fig(args) -> int:
    if args.figure not in (6, 7):
        raise _Fail(EXIT_DOMAIN, f"unknown figure {args.figure}; choose 6 or 7")
    started = datetime.now(timezone.utc).isoformat()
    scenario = _load(args.scenario)
    seed = _seed(args, scenario)
    src, dst = _endpoints(args, scenario.topology)
    engine = engine_for(scenario, seed=seed)
    report = traceroute(engine, src, dst, scenario.probe_config)
    if not report.hops:
        raise _Fail(EXIT_DOMAIN, f"{dst!r} is unreachable from {src!r}")
    out = _outdir(args.out)
    written: list[str] = []
    if args.figure == 6:
        _write(out, "fig6.csv", figure6_csv(report), written)
    else:
        _write(out, "fig7.csv", figure7_csv(report), written)
    _manifest(out, args, args.scenario, seed, written, started)
    return EXIT_OK


def _zero_jitter_report(ref: str, cfg: ProbeConfig):
    scenario = _load(ref)
    src, dst = default_endpoints(scenario.topology)
    engine = engine_for(scenario, jitter=JitterModel.none())
    return scenario, traceroute(engine, src, dst, cfg)


def cmd_compare(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    cfg = ProbeConfig(args.iterations, args.probes)
    base_scn, base = _zero_jitter_report(args.baseline, cfg)
    _, variant = _zero_jitter_report(args.variant, cfg)
    result = compare_scaling(base, variant)
    if result.common_prefix == 0:
        raise _Fail(EXIT_DOMAIN, "baseline and variant paths share no common prefix hops")
    out = _outdir(args.out)
    written: list[str] = []
    _write(out, "compare.csv", comparison_to_csv(result), written)
    summary = comparison_summary(result)
    _write(
        out,
        "compare_summary.csv",
        "metric,value\n" + "".join(f"{k},{v}\n" for k, v in summary.items()),
        written,
    )
    for k, v in summary.items():
        print(f"{k}: {v}")
    _manifest(out, args, f"{args.baseline} vs {args.variant}", base_scn.seed, written, started)
    return EXIT_OK


def cmd_ping(args) -> int:
    scenario = _load(args.scenario)
    src, dst = _endpoints(args, scenario.topology)
    engine = engine_for(scenario, seed=_seed(args, scenario))
    result = ping(engine, src, dst, args.count, scenario.probe_config)
    stats = result.stats
    print(f"{src} -> {dst}: {result.sent} sent, loss {result.loss_fraction:.3f}")
    if stats is not None:
        print(f"rtt min/mean/max = {stats.min_us:.3f}/{stats.mean_us:.3f}/{stats.max_us:.3f} us")
    return EXIT_OK if result.loss_fraction < 1.0 else EXIT_DOMAIN


def cmd_export(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    scenario = _load(args.scenario)
    topo = scenario.topology
    plan = derive_address_plan(topo)
    tables = compute_forwarding_tables(topo, plan)
    servers = sorted(n.id for n in topo.nodes.values() if n.kind.value in ("Server", "GatewayServer"))
    try:
        routes = [route(tables, s, d) for s in servers for d in servers]
    except Unreachable as exc:
        raise _Fail(EXIT_DOMAIN, str(exc)) from exc
    out = _outdir(args.out)
    save_scenario(scenario, out / "scenario.json")
    written = [str(out / "scenario.json")]
    _write(out, "plan.csv", plan_to_csv(plan, topo), written)
    _write(out, "routes.csv", routes_to_csv(routes), written)
    _manifest(out, args, args.scenario, scenario.seed, written, started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pondc", description="Server-centric PON data-centre latency simulator"
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_arg(p):
        p.add_argument("scenario", help="scenario JSON path or builtin:ref8 / builtin:prior5")

    def endpoint_args(p):
        p.add_argument("--from", dest="src", default=None, help="source node id")
        p.add_argument("--to", dest="dst", default=None, help="destination node id")

    p = sub.add_parser("validate", help="check a scenario (and optionally a plan CSV)")
    scenario_arg(p)
    p.add_argument("--plan", default=None, help="address plan CSV to validate instead of the derived one")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("traceroute", help="run a traceroute campaign and write CSVs")
    scenario_arg(p)
    endpoint_args(p)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--probes", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_traceroute)

    p = sub.add_parser("fig", help="write plot-ready CSV for figure 6 or 7")
    scenario_arg(p)
    endpoint_args(p)
    p.add_argument("--figure", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fig)

    p = sub.add_parser("compare", help="zero-jitter per-hop comparison of two scenarios")
    p.add_argument("--baseline", default="builtin:prior5")
    p.add_argument("--variant", default="builtin:ref8")
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--probes", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ping", help="echo probes between two nodes")
    scenario_arg(p)
    endpoint_args(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ping)

    p = sub.add_parser("export", help="write scenario JSON, address plan and route dump")
    scenario_arg(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except PonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
