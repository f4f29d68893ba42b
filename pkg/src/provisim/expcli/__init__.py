"""Experiment runner: scenario files, run/compare/sweep/replay commands, SVG plots."""

from .scenario import Scenario, ScenarioError, load_scenario

__all__ = ["Scenario", "ScenarioError", "load_scenario"]
