"""Utility indifference prices and hedges under basis risk."""

import json

from ._core import (
    ConfigError,
    ConvergenceError,
    Scenario,
    ScenarioError,
    load_scenario,
    oracle,
    orthogonal_scenario,
    price,
    reference_scenario,
    scenario_from_json,
)

ROUTES = ("bsde", "fde", "perturbation", "girsanov")


def constants(scenario):
    """Constants ledger of a scenario as a dict."""
    from ._core import constants_json

    return json.loads(constants_json(scenario))


def summary(scenario):
    return json.loads(scenario.summary_json())


__all__ = [
    "ROUTES",
    "ConfigError",
    "ConvergenceError",
    "Scenario",
    "ScenarioError",
    "constants",
    "load_scenario",
    "oracle",
    "orthogonal_scenario",
    "price",
    "reference_scenario",
    "scenario_from_json",
    "summary",
]
