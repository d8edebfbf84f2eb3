"""Scenario configuration, orchestration and output for the simulation figures."""

from .config import SCENARIOS, ScenarioConfig, build_config
from .scenarios import REGISTRY, run_scenario

__all__ = ["REGISTRY", "SCENARIOS", "ScenarioConfig", "build_config", "run_scenario"]
