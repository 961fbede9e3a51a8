"""Scenario files, named checks, run summaries and the ``relboltz`` command line."""
from .config import Scenario, build_scenario, load_config, parse_config, shipped_scenarios
from .run import run_scenario

__all__ = ["Scenario", "build_scenario", "load_config", "parse_config", "shipped_scenarios", "run_scenario"]
