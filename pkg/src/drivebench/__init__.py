"""drivebench: a deterministic virtual testbench for a DSP motor drive.

Register-level PWM/ADC/eQEP/DAC peripheral models, a switched or averaged
two-level inverter driving an induction machine, V/f and field-oriented
control loops running in the simulated ADC interrupt, and a telemetry
stream with a live dashboard protocol.
"""

from .engine import Engine, RunReport, SimClock, run_scenario
from .plant import DivergenceError, MotorParams, MotorState
from .scenario import (Command, Scenario, ScenarioError, load_bundled_scenario,
                       load_scenario, load_scenario_file)
from .telemetry import FrameLog, StreamServer, TelemetryFrame

__version__ = "0.1.0"

__all__ = [
    "Command", "DivergenceError", "Engine", "FrameLog", "MotorParams",
    "MotorState", "RunReport", "Scenario", "ScenarioError", "SimClock",
    "StreamServer", "TelemetryFrame", "load_bundled_scenario",
    "load_scenario", "load_scenario_file", "run_scenario", "__version__",
]
