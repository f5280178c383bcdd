"""In-process fabric simulator."""

from .clock import VirtualClock
from .fabric import (Event, EventLog, Fabric, FabricConfig, SimActuatorRunner,
                     VirtualNode, spawn_fabric, T0)
from .rms import RmsStub
from .scenario import (EventLogResult, ExpectationFailed, ScenarioError,
                       ScenarioScript, run_scenario)
from .templates import WATCHED_SERVICE, fabric_store, node_names, node_rules

__all__ = [
    "Event", "EventLog", "EventLogResult", "ExpectationFailed", "Fabric",
    "FabricConfig", "RmsStub", "ScenarioError", "ScenarioScript",
    "SimActuatorRunner", "T0", "VirtualClock", "VirtualNode",
    "WATCHED_SERVICE", "fabric_store", "node_names", "node_rules",
    "run_scenario", "spawn_fabric",
]
