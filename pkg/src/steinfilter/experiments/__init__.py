"""Experiment scenarios, the config-driven runner, and property suites."""

from .checks import SUITES, run_suite
from .runner import ScenarioConfig, run_scenario, sweep
from .scenarios import (
    SCENARIO_NAMES,
    Scenario,
    build_scenario,
    raycast,
    simulate_scan,
    two_room_map,
)

__all__ = [
    "SCENARIO_NAMES",
    "SUITES",
    "Scenario",
    "ScenarioConfig",
    "build_scenario",
    "raycast",
    "run_scenario",
    "run_suite",
    "simulate_scan",
    "sweep",
    "two_room_map",
]
