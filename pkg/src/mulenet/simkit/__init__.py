"""Deterministic discrete-event simulation of island messaging scenarios."""

from .scenario import (
    Diagnostic,
    Disc,
    FailureWindow,
    Island,
    Itinerary,
    NodeSpec,
    PolygonExtent,
    RandomWaypoint,
    Scenario,
    ScenarioParseError,
    StaticMobility,
    TrafficSpec,
    expand_traffic,
    load_scenario_file,
    scenario_from_dict,
    substream,
    validate_scenario,
)
from .engine import (
    AuditError,
    InvalidScenarioError,
    Metrics,
    METRICS_FIELDS,
    RunResult,
    World,
    contacts_at,
    run,
    step,
)
from .oracle import TooLargeError, oracle_deliverable

__all__ = [
    "AuditError",
    "Diagnostic",
    "Disc",
    "FailureWindow",
    "InvalidScenarioError",
    "Island",
    "Itinerary",
    "METRICS_FIELDS",
    "Metrics",
    "NodeSpec",
    "PolygonExtent",
    "RandomWaypoint",
    "RunResult",
    "Scenario",
    "ScenarioParseError",
    "StaticMobility",
    "TooLargeError",
    "TrafficSpec",
    "World",
    "contacts_at",
    "expand_traffic",
    "load_scenario_file",
    "oracle_deliverable",
    "run",
    "scenario_from_dict",
    "step",
    "substream",
    "validate_scenario",
]
