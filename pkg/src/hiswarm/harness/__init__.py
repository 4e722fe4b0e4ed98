"""Simulator, instance and config ingestion, collision audit, CLI."""

from .audit import CollisionEvent, audit_collisions, audit_positions, sample_report_positions
from .config import (
    Instance,
    ParseError,
    RobotSpec,
    SchemaError,
    SimConfig,
    load_config,
    load_instance,
    save_config,
    save_instance,
)
from .fixtures import FIXTURES, circle_instance, load_fixture, swap48_instance, swap_instance
from .sim import PartitionFailed, RoutingUnsolvable, SimReport, Simulator, World, build_world, run_simulation

__all__ = [
    "CollisionEvent", "audit_collisions", "audit_positions", "sample_report_positions",
    "Instance", "ParseError", "RobotSpec", "SchemaError", "SimConfig",
    "load_config", "load_instance", "save_config", "save_instance",
    "FIXTURES", "circle_instance", "load_fixture", "swap48_instance", "swap_instance",
    "PartitionFailed", "RoutingUnsolvable", "SimReport", "Simulator", "World", "build_world", "run_simulation",
]
