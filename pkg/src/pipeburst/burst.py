"""Burst initiation at interior nodes from wall hoop stress.

A node becomes eligible once its hoop stress reaches ``threshold_fraction``
of the yield stress.  The deterministic model bursts every eligible node;
the probabilistic model tosses a seeded coin each step with a probability
that ramps linearly from 0 at the threshold to 1 at full yield.  A burst is
permanent and opens a fixed orifice of coefficient ``lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .hydraulics import PipelineNetwork, SolverState, hoop_stress, node_pipe


class BurstMode(str, Enum):
    NONE = "none"
    DETERMINISTIC = "deterministic"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class BurstModelConfig:
    mode: BurstMode = BurstMode.DETERMINISTIC
    yield_stress: float = 8e6
    threshold_fraction: float = 0.8
    default_lambda: float = 0.001
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", BurstMode(self.mode))
        if not 0.0 < self.threshold_fraction < 1.0:
            raise ValueError("burst.threshold_fraction must lie in (0, 1)")
        if not self.default_lambda > 0:
            raise ValueError("burst.default_lambda must be > 0")
        if not self.yield_stress > 0:
            raise ValueError("burst.yield_stress must be > 0")


@dataclass(frozen=True)
class BurstEvent:
    step: int
    time: float
    node: int
    stress: float
    probability: float
    draw: float | None
    forced: bool = False


@dataclass(frozen=True)
class BurstRegistry:
    """Burst status of every interior node; transitions are intact -> burst only."""

    nodes: tuple[int, ...]
    burst_step: dict = field(default_factory=dict)
    lam: dict = field(default_factory=dict)
    events: tuple[BurstEvent, ...] = ()

    @classmethod
    def for_network(cls, network: PipelineNetwork) -> BurstRegistry:
        return cls(tuple(network.interior_nodes))

    def is_burst(self, node: int) -> bool:
        return node in self.burst_step

    def intact(self) -> list[int]:
        return [n for n in self.nodes if n not in self.burst_step]

    def burst_nodes(self) -> list[int]:
        return sorted(self.burst_step)

    def leak_coefficients(self) -> dict[int, float]:
        return {n: self.lam[n] for n in sorted(self.burst_step)}

    def with_burst(self, node: int, step: int, lam: float, event: BurstEvent | None = None) -> BurstRegistry:
        if node not in self.nodes:
            raise ValueError(f"node {node} is not an interior node")
        if node in self.burst_step:
            return self
        if not lam > 0:
            raise ValueError("leak coefficient must be > 0")
        events = self.events + ((event,) if event is not None else ())
        return replace(
            self,
            burst_step={**self.burst_step, node: step},
            lam={**self.lam, node: lam},
            events=events,
        )

    def same_bursts(self, other: BurstRegistry) -> bool:
        return self.burst_step == other.burst_step and self.lam == other.lam


def burst_probability(hs: float, ys: float, threshold_fraction: float = 0.8) -> float:
    lo = threshold_fraction * ys
    if hs < lo:
        return 0.0
    if hs >= ys:
        return 1.0
    return min(1.0, (hs - lo) / (ys * (1.0 - threshold_fraction)))


def certain_above_threshold(hs: float, ys: float, threshold_fraction: float = 0.8) -> float:
    """Probability law that bursts every eligible node with certainty."""
    return 1.0 if hs >= threshold_fraction * ys else 0.0


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based stream so draws are reproducible across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def node_stress(state: SolverState, network: PipelineNetwork, node: int) -> float:
    gauge = state.head[node] - network.nodes[node].elevation
    return hoop_stress(gauge, network.fluid, node_pipe(network, node))


def evaluate_bursts(
    state: SolverState,
    network: PipelineNetwork,
    config: BurstModelConfig,
    registry: BurstRegistry,
    rng: np.random.Generator | None,
    step: int,
    probability: Callable[[float, float, float], float] | None = None,
) -> BurstRegistry:
    """Decide new bursts from the post-update heads of ``state``.

    Probabilistic mode draws one uniform per intact interior node in
    ascending node order, whatever its probability, so the stream position
    depends only on how many nodes are still intact.
    """
    if config.mode is BurstMode.NONE:
        return registry
    law = probability or burst_probability
    ys, frac = config.yield_stress, config.threshold_fraction
    for node in registry.intact():
        hs = node_stress(state, network, node)
        if config.mode is BurstMode.DETERMINISTIC:
            if hs >= frac * ys:
                p = law(hs, ys, frac)
                event = BurstEvent(step, state.time, node, hs, p, None)
                registry = registry.with_burst(node, step, config.default_lambda, event)
            continue
        p = law(hs, ys, frac)
        u = float(rng.random())
        if u < p:
            event = BurstEvent(step, state.time, node, hs, p, u)
            registry = registry.with_burst(node, step, config.default_lambda, event)
    return registry
