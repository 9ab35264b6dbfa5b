"""Water-hammer transients, pipe bursts and EKF leak estimation for serial pipelines."""

from .burst import BurstMode, BurstModelConfig, BurstRegistry, evaluate_bursts
from .ekf import NoiseConfig, ProcessModel, run_filter
from .hydraulics import Fluid, NetworkNode, NodeKind, PipelineNetwork, PipeSegment, SolverState, steady_state
from .moc import TimeGrid, ValveSchedule, step
from .runner import RunArtifacts, estimate, simulate, simulate_measurements
from .scenario import ScenarioConfig, ScenarioError, load_scenario, parse_scenario, preset

__all__ = [
    "BurstMode", "BurstModelConfig", "BurstRegistry", "Fluid", "NetworkNode", "NodeKind",
    "NoiseConfig", "PipeSegment", "PipelineNetwork", "ProcessModel", "RunArtifacts",
    "ScenarioConfig", "ScenarioError", "SolverState", "TimeGrid", "ValveSchedule",
    "estimate", "evaluate_bursts", "load_scenario", "parse_scenario", "preset", "run_filter",
    "simulate", "simulate_measurements", "steady_state", "step",
]
