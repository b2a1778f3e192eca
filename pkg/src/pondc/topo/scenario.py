"""Scenario documents: strict JSON load/save of topology plus run parameters."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..config import DEFAULT_JITTER, JitterKind, JitterModel, ProbeConfig
from ..errors import InvalidArgument, ParseError, ValidationError
from .model import DEFAULT_WAVELENGTHS, Link, Node, Topology, validate_topology

_TOP_KEYS = {"nodes", "links", "interconnect_mode", "seed", "probe", "jitter"}
_NODE_KEYS = {"id", "kind", "rack", "cell", "processing_delay_us"}
_NODE_OPTIONAL = {"wavelengths"}
_LINK_KEYS = {"id", "a", "b", "length_km", "rate_gbps", "medium"}
_PROBE_KEYS = {"iterations", "probes_per_run", "probe_size_bytes", "inter_probe_gap_us"}
_JITTER_KEYS = {"kind", "half_width_us"}

BUILTIN_PREFIX = "builtin:"


@dataclass(frozen=True)
class ScenarioConfig:
    topology: Topology
    seed: int = 0
    probe_config: ProbeConfig = field(default_factory=ProbeConfig)
    jitter_model: JitterModel = DEFAULT_JITTER

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")

    def with_seed(self, seed: int) -> ScenarioConfig:
        return ScenarioConfig(self.topology, seed, self.probe_config, self.jitter_model)

    def with_jitter(self, jitter: JitterModel) -> ScenarioConfig:
        return ScenarioConfig(self.topology, self.seed, self.probe_config, jitter)

    def with_probe(self, probe: ProbeConfig) -> ScenarioConfig:
        return ScenarioConfig(self.topology, self.seed, probe, self.jitter_model)


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    t = cfg.topology
    nodes = []
    for nid in sorted(t.nodes):
        n = t.nodes[nid]
        doc: dict[str, Any] = {
            "id": n.id,
            "kind": n.kind.value,
            "rack": n.rack_id,
            "cell": n.cell_id,
            "processing_delay_us": n.processing_delay_us,
        }
        if n.wavelengths is not None and n.wavelengths != DEFAULT_WAVELENGTHS:
            doc["wavelengths"] = n.wavelengths
        nodes.append(doc)
    links = [
        {
            "id": link.id,
            "a": link.a,
            "b": link.b,
            "length_km": link.length_km,
            "rate_gbps": link.rate_gbps,
            "medium": link.medium.value,
        }
        for link in (t.links[k] for k in sorted(t.links))
    ]
    p = cfg.probe_config
    return {
        "nodes": nodes,
        "links": links,
        "interconnect_mode": t.interconnect_mode.value,
        "seed": cfg.seed,
        "probe": {
            "iterations": p.iterations,
            "probes_per_run": p.probes_per_run,
            "probe_size_bytes": p.probe_size_bytes,
            "inter_probe_gap_us": p.inter_probe_gap_us,
        },
        "jitter": {
            "kind": cfg.jitter_model.kind.value,
            "half_width_us": cfg.jitter_model.half_width_us,
        },
    }


def save_scenario(cfg: ScenarioConfig, path: str | os.PathLike) -> None:
    text = json.dumps(scenario_to_dict(cfg), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def _check_keys(doc: Any, allowed: set[str], where: str, optional: set[str] = frozenset()) -> None:
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = sorted(set(doc) - allowed - optional)
    if unknown:
        raise ParseError(f"{where}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(allowed - set(doc))
    if missing:
        raise ParseError(f"{where}: missing key(s) {', '.join(missing)}")


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return value


def _integer(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where}: expected an integer, got {value!r}")
    return value


def _opt_str(value: Any, where: str) -> str | None:
    if value is not None and not isinstance(value, str):
        raise ParseError(f"{where}: expected a string or null")
    return value


def scenario_from_dict(doc: Any) -> ScenarioConfig:
    """Build a ScenarioConfig from a decoded document.

    Raises ParseError for schema problems and ValidationError when the
    resulting topology breaks a structural invariant.
    """
    _check_keys(doc, _TOP_KEYS, "scenario")
    if not isinstance(doc["nodes"], list) or not isinstance(doc["links"], list):
        raise ParseError("scenario: 'nodes' and 'links' must be arrays")

    nodes = []
    seen: set[str] = set()
    for i, nd in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        _check_keys(nd, _NODE_KEYS, where, _NODE_OPTIONAL)
        if not isinstance(nd["id"], str):
            raise ParseError(f"{where}.id: expected a string")
        if nd["id"] in seen:
            raise ParseError(f"{where}: duplicate node id {nd['id']!r}")
        seen.add(nd["id"])
        try:
            node = Node(
                id=nd["id"],
                kind=nd["kind"],
                rack_id=_opt_str(nd["rack"], f"{where}.rack"),
                cell_id=_opt_str(nd["cell"], f"{where}.cell"),
                processing_delay_us=_number(nd["processing_delay_us"], f"{where}.processing_delay_us"),
                wavelengths=(
                    _integer(nd["wavelengths"], f"{where}.wavelengths")
                    if "wavelengths" in nd
                    else None
                ),
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}.kind: unknown kind {nd['kind']!r}") from exc
        nodes.append(node)

    links = []
    seen_links: set[str] = set()
    for i, ld in enumerate(doc["links"]):
        where = f"links[{i}]"
        _check_keys(ld, _LINK_KEYS, where)
        for key in ("id", "a", "b"):
            if not isinstance(ld[key], str):
                raise ParseError(f"{where}.{key}: expected a string")
        if ld["id"] in seen_links:
            raise ParseError(f"{where}: duplicate link id {ld['id']!r}")
        seen_links.add(ld["id"])
        try:
            link = Link(
                id=ld["id"],
                a=ld["a"],
                b=ld["b"],
                length_km=_number(ld["length_km"], f"{where}.length_km"),
                rate_gbps=_number(ld["rate_gbps"], f"{where}.rate_gbps"),
                medium=ld["medium"],
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}.medium: unknown medium {ld['medium']!r}") from exc
        links.append(link)

    try:
        topology = Topology.from_parts(nodes, links, doc["interconnect_mode"])
    except ValueError as exc:
        raise ParseError(f"interconnect_mode: {exc}") from exc

    seed = _integer(doc["seed"], "seed")

    _check_keys(doc["probe"], _PROBE_KEYS, "probe")
    pd = doc["probe"]
    _check_keys(doc["jitter"], _JITTER_KEYS, "jitter")
    jd = doc["jitter"]
    try:
        probe = ProbeConfig(
            iterations=_integer(pd["iterations"], "probe.iterations"),
            probes_per_run=_integer(pd["probes_per_run"], "probe.probes_per_run"),
            probe_size_bytes=_integer(pd["probe_size_bytes"], "probe.probe_size_bytes"),
            inter_probe_gap_us=_number(pd["inter_probe_gap_us"], "probe.inter_probe_gap_us"),
        )
        jitter = JitterModel(JitterKind(jd["kind"]), _number(jd["half_width_us"], "jitter.half_width_us"))
        cfg = ScenarioConfig(topology, seed, probe, jitter)
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc

    violations = validate_topology(topology)
    if violations:
        raise ValidationError(violations)
    return cfg


def load_scenario(path: str | os.PathLike) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed scenario: {exc.msg}", exc.lineno, exc.colno) from exc
    return scenario_from_dict(doc)


def resolve_scenario(ref: str) -> ScenarioConfig:
    """Load a scenario by path or by ``builtin:<name>``."""
    if ref.startswith(BUILTIN_PREFIX):
        from .builders import BUILTINS

        name = ref[len(BUILTIN_PREFIX):]
        try:
            return BUILTINS[name]()
        except KeyError:
            raise InvalidArgument(
                f"unknown builtin scenario {name!r}; choose from {', '.join(sorted(BUILTINS))}"
            ) from None
    return load_scenario(ref)
