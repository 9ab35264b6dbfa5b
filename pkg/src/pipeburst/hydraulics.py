"""Physical description of a serial pipeline and its steady operating point.

Heads are piezometric (pressure head plus elevation) in metres, flows are
volumetric in m^3/s.  Node ``0`` is always the supply reservoir and node
``N-1`` the terminal device (a valve discharging into a second reservoir, or
a closed dead end).  Pipe ``i`` joins node ``i`` to node ``i+1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class HydraulicsError(ValueError):
    """Base class for invalid physical input."""


class InvalidMaterialError(HydraulicsError):
    pass


class InfeasibleScenarioError(HydraulicsError):
    pass


class NodeKind(str, Enum):
    SUPPLY_RESERVOIR = "supply_reservoir"
    INTERIOR = "interior"
    VALVE_TO_RESERVOIR = "valve_to_reservoir"
    DEAD_END = "dead_end"


@dataclass(frozen=True)
class Fluid:
    density: float = 1000.0        # kg/m^3
    bulk_modulus: float = 2.1994e9  # Pa
    gravity: float = 9.8           # m/s^2

    def __post_init__(self):
        for name in ("density", "bulk_modulus", "gravity"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise HydraulicsError(f"fluid.{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class PipeSegment:
    length: float
    diameter: float
    wall_thickness: float
    friction_factor: float
    youngs_modulus: float
    anchoring_coefficient: float = 1.0

    def __post_init__(self):
        for name in ("length", "diameter", "wall_thickness", "youngs_modulus"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise HydraulicsError(f"pipe.{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.friction_factor) and self.friction_factor >= 0):
            raise HydraulicsError(f"pipe.friction_factor must be >= 0, got {self.friction_factor!r}")
        if self.wall_thickness >= self.diameter / 2:
            raise HydraulicsError("pipe.wall_thickness must be smaller than diameter/2")
        if not math.isfinite(self.anchoring_coefficient):
            raise HydraulicsError("pipe.anchoring_coefficient must be finite")

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0


@dataclass(frozen=True)
class NetworkNode:
    id: int
    elevation: float = 0.0
    kind: NodeKind = NodeKind.INTERIOR


@dataclass(frozen=True)
class PipelineNetwork:
    """Immutable serial pipeline: reservoir, interior junctions, terminal device."""

    fluid: Fluid
    nodes: tuple[NetworkNode, ...]
    pipes: tuple[PipeSegment, ...]
    yield_stress: float
    upstream_head: float
    downstream_head: float | None = None
    entrance_loss: float = 0.5
    valve_discharge_coefficient: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "pipes", tuple(self.pipes))
        n = len(self.nodes)
        if n < 3:
            raise HydraulicsError("nodes: a pipeline needs at least 3 nodes")
        if len(self.pipes) != n - 1:
            raise HydraulicsError(
                f"pipes: expected {n - 1} pipes for {n} nodes, got {len(self.pipes)}"
            )
        if [node.id for node in self.nodes] != list(range(n)):
            raise HydraulicsError("nodes: ids must be contiguous 0..N-1 in order")
        if self.nodes[0].kind is not NodeKind.SUPPLY_RESERVOIR:
            raise HydraulicsError("nodes: node 0 must be the supply_reservoir")
        terminal = (NodeKind.VALVE_TO_RESERVOIR, NodeKind.DEAD_END)
        if self.nodes[-1].kind not in terminal:
            raise HydraulicsError("nodes: last node must be valve_to_reservoir or dead_end")
        for node in self.nodes[1:-1]:
            if node.kind is not NodeKind.INTERIOR:
                raise HydraulicsError(f"nodes: node {node.id} must be interior")
        if not (math.isfinite(self.yield_stress) and self.yield_stress > 0):
            raise HydraulicsError("yield_stress must be > 0")
        if not math.isfinite(self.upstream_head):
            raise HydraulicsError("upstream_head must be finite")
        if self.has_valve:
            if self.downstream_head is None or not math.isfinite(self.downstream_head):
                raise HydraulicsError("downstream_head is required for a valve terminal")
            if not self.valve_discharge_coefficient > 0:
                raise HydraulicsError("valve_discharge_coefficient must be > 0")
        if not math.isfinite(self.entrance_loss) or self.entrance_loss < -1:
            raise HydraulicsError("entrance_loss must be >= -1")
        for pipe in self.pipes:
            wave_speed(self.fluid, pipe)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_pipes(self) -> int:
        return len(self.pipes)

    @property
    def has_valve(self) -> bool:
        return self.nodes[-1].kind is NodeKind.VALVE_TO_RESERVOIR

    @property
    def elevations(self) -> np.ndarray:
        return np.array([node.elevation for node in self.nodes], dtype=float)

    @property
    def interior_nodes(self) -> range:
        return range(1, self.n_nodes - 1)

    def wave_speeds(self) -> np.ndarray:
        return np.array([wave_speed(self.fluid, p) for p in self.pipes])


@dataclass
class SolverState:
    """Heads at every node and flows at both ends of every pipe at one instant."""

    time: float
    head: np.ndarray
    flow_up: np.ndarray
    flow_down: np.ndarray
    leak_rate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.head = np.asarray(self.head, dtype=float)
        self.flow_up = np.asarray(self.flow_up, dtype=float)
        self.flow_down = np.asarray(self.flow_down, dtype=float)
        if self.leak_rate is None:
            self.leak_rate = np.zeros_like(self.head)
        else:
            self.leak_rate = np.asarray(self.leak_rate, dtype=float)
        if self.flow_up.shape != self.flow_down.shape or self.flow_up.size != self.head.size - 1:
            raise HydraulicsError("state: flow arrays must have one entry per pipe")
        if self.leak_rate.shape != self.head.shape:
            raise HydraulicsError("state: leak_rate must have one entry per node")

    def copy(self) -> SolverState:
        return SolverState(
            self.time,
            self.head.copy(),
            self.flow_up.copy(),
            self.flow_down.copy(),
            self.leak_rate.copy(),
        )


def wave_speed(fluid: Fluid, pipe: PipeSegment) -> float:
    """Pressure-wave celerity in an elastic, anchored pipe (m/s)."""
    denominator = 1.0 + (fluid.bulk_modulus / pipe.youngs_modulus) * (
        pipe.diameter / pipe.wall_thickness
    ) * pipe.anchoring_coefficient
    if not denominator > 0:
        raise InvalidMaterialError(
            f"wave speed undefined: elasticity denominator {denominator!r} <= 0"
        )
    a = math.sqrt((fluid.bulk_modulus / fluid.density) / denominator)
    if not math.isfinite(a):
        raise InvalidMaterialError("wave speed is not finite")
    return a


def energy_residual(network: PipelineNetwork, velocity: float) -> float:
    """Head left over after all steady losses at a reference mean velocity.

    Losses are expressed with the velocity of the first pipe; pipes of other
    diameters are scaled through continuity.  Positive means the available
    head difference exceeds the losses (velocity too small).
    """
    flow = velocity * network.pipes[0].area
    return (network.upstream_head - network.downstream_head) - total_loss(network, flow)


def total_loss(network: PipelineNetwork, flow: float) -> float:
    g = network.fluid.gravity
    a0 = network.pipes[0].area
    loss = (1.0 + network.entrance_loss) * flow**2 / (2 * g * a0**2)
    for pipe in network.pipes:
        loss += pipe.friction_factor * pipe.length / pipe.diameter * flow**2 / (
            2 * g * pipe.area**2
        )
    valve_area = network.pipes[-1].area * network.valve_discharge_coefficient
    loss += (flow / valve_area) ** 2 / (2 * g)
    return loss


def _bisect(fn, lo: float, hi: float, tol: float, max_iter: int = 400) -> float:
    f_lo = fn(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if abs(f_mid) < tol or hi - lo < 1e-15 * max(1.0, abs(mid)):
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def steady_state(network: PipelineNetwork, tol: float = 1e-12) -> SolverState:
    """Initial condition before any transient.

    Valve terminal: a single flow runs through every pipe, found by bisection
    on the mean velocity of the first pipe.  Heads follow the same
    loss chain the transient boundaries use, so one unforced step of the
    solver leaves the state unchanged.  Dead end: stagnant hydrostatic column.
    """
    n = network.n_nodes
    zeros = np.zeros(n - 1)
    if not network.has_valve:
        head = np.full(n, float(network.upstream_head))
        return SolverState(0.0, head, zeros.copy(), zeros.copy())

    if network.upstream_head <= network.downstream_head:
        raise InfeasibleScenarioError(
            "upstream_head must exceed downstream_head for a forward steady flow"
        )
    hi = 1.0
    while energy_residual(network, hi) > 0:
        hi *= 2.0
        if hi > 1e4:
            raise InfeasibleScenarioError("no positive root of the steady energy balance")
    velocity = _bisect(lambda v: energy_residual(network, v), 0.0, hi, tol)
    flow = velocity * network.pipes[0].area

    g = network.fluid.gravity
    head = np.empty(n)
    head[0] = network.upstream_head - (1.0 + network.entrance_loss) * flow**2 / (
        2 * g * network.pipes[0].area ** 2
    )
    for i, pipe in enumerate(network.pipes):
        head[i + 1] = head[i] - pipe.friction_factor * pipe.length / pipe.diameter * flow**2 / (
            2 * g * pipe.area**2
        )
    if not head[-1] > network.downstream_head:
        raise InfeasibleScenarioError("steady valve head does not exceed downstream head")
    q = np.full(n - 1, flow)
    return SolverState(0.0, head, q, q.copy())


def pressure_head(node: NetworkNode, state: SolverState) -> float:
    return float(state.head[node.id] - node.elevation)


def hoop_stress(pressure_head: float, fluid: Fluid, pipe: PipeSegment) -> float:
    """Thin-wall circumferential stress (Pa) for a gauge pressure head (m)."""
    return fluid.density * fluid.gravity * pressure_head * pipe.diameter / (2.0 * pipe.wall_thickness)


def node_pipe(network: PipelineNetwork, node: int) -> PipeSegment:
    """Pipe whose wall is checked for stress at a node (the one entering it)."""
    return network.pipes[max(node - 1, 0)]
