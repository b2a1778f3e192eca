"""Topology model, scenario files and testbed builders."""

from .builders import (
    BUILTINS,
    build_cell,
    build_prior_testbed,
    build_rack,
    build_reference_testbed,
    default_endpoints,
)
from .model import (
    HOST_KINDS,
    SERVER_KINDS,
    TRANSPARENT_KINDS,
    InterconnectMode,
    Link,
    Medium,
    Node,
    NodeKind,
    Topology,
    Violation,
    merge,
    validate_topology,
)
from .scenario import (
    ScenarioConfig,
    load_scenario,
    resolve_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

__all__ = [
    "BUILTINS",
    "HOST_KINDS",
    "SERVER_KINDS",
    "TRANSPARENT_KINDS",
    "InterconnectMode",
    "Link",
    "Medium",
    "Node",
    "NodeKind",
    "ScenarioConfig",
    "Topology",
    "Violation",
    "build_cell",
    "build_prior_testbed",
    "build_rack",
    "build_reference_testbed",
    "default_endpoints",
    "load_scenario",
    "merge",
    "resolve_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "validate_topology",
]
