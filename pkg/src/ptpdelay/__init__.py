"""Delay attacks on encrypted two-step PTP: simulation, detection and guaranteed bounds."""

__version__ = "0.1.0"

from .core import Call, Node, Output, Pipeline, ReturnOutputs, Variable
from .harness import run_scenario, sweep
from .scenario import Scenario, load_scenario
