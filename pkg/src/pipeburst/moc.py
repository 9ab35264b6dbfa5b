"""Fixed-grid Method of Characteristics for a serial pipeline.

Every pipe is a single reach with Courant number one, so each node at step
``k`` is found from its two neighbours at step ``k-1``:

    C+ :  Q_in  = cp - ca * H
    C- :  Q_out = cn + ca * H

Boundary nodes close the system with one device equation each; leaking
interior nodes add an orifice sink to the junction continuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .hydraulics import PipelineNetwork, SolverState, steady_state, wave_speed


class MocError(RuntimeError):
    """Raised when a boundary cannot be advanced."""

    def __init__(self, message: str, node: int | None = None):
        self.node = node
        if node is not None:
            message = f"node {node}: {message}"
        super().__init__(message)


class BoundaryMisuseError(MocError):
    pass


class ReverseFlowUnsupportedError(MocError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class CharacteristicCoefficients:
    cp: float
    cn: float
    ca: float


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int

    @classmethod
    def for_network(cls, network: PipelineNetwork, steps: int, rtol: float = 1e-9) -> TimeGrid:
        """Grid with Courant number one in every pipe."""
        dts = [p.length / wave_speed(network.fluid, p) for p in network.pipes]
        dt = dts[0]
        if any(abs(d - dt) > rtol * dt for d in dts):
            raise DomainError(f"pipe travel times differ ({min(dts)!r}..{max(dts)!r}); L/a must be equal")
        return cls(dt, int(steps))

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


class ValveSchedule:
    """Dimensionless valve opening tau(t), 1 open .. 0 shut.

    ``shape`` maps normalised time t/t_c in [0, 1] to an opening; the default
    is a linear ramp.  Values are clipped so tau(0)=1 and tau(t>=t_c)=0
    exactly.
    """

    def __init__(self, closure_time: float, shape: Callable[[float], float] | None = None):
        if not closure_time >= 0:
            raise DomainError("closure_time must be >= 0")
        self.closure_time = float(closure_time)
        self.shape = shape or (lambda s: 1.0 - s)

    def __call__(self, t: float) -> float:
        if t <= 0:
            return 1.0
        if t >= self.closure_time:
            return 0.0
        return min(1.0, max(0.0, float(self.shape(t / self.closure_time))))

    def __repr__(self):
        return f"ValveSchedule(closure_time={self.closure_time!r})"


class FixedOpening(ValveSchedule):
    """Valve held at a constant opening (used for stationarity checks)."""

    def __init__(self, tau: float = 1.0):
        super().__init__(0.0)
        self.tau = tau

    def __call__(self, t: float) -> float:
        return self.tau


class PipeConstants:
    """Per-pipe admittance and friction factors for one time step."""

    def __init__(self, network: PipelineNetwork, dt: float):
        g = network.fluid.gravity
        self.dt = dt
        self.area = np.array([p.area for p in network.pipes])
        self.wave_speed = network.wave_speeds()
        self.ca = g * self.area / self.wave_speed
        self.friction = np.array(
            [p.friction_factor * dt / (2 * p.diameter * p.area) for p in network.pipes]
        )
        for j in network.interior_nodes:
            if not math.isclose(self.ca[j - 1], self.ca[j], rel_tol=1e-12):
                raise DomainError(f"node {j}: adjoining pipes must share the admittance gA/a")


def characteristic_coefficients(
    state: SolverState, node: int, network: PipelineNetwork, dt: float,
    constants: PipeConstants | None = None,
) -> CharacteristicCoefficients:
    """C+ / C- intercepts reaching ``node`` from step k-1.

    ``cp`` travels down the pipe entering the node, starting from that
    pipe's upstream end; ``cn`` travels up the pipe leaving the node,
    starting from that pipe's downstream end.  A missing side is NaN.
    """
    c = constants or PipeConstants(network, dt)
    n = network.n_nodes
    if not 0 <= node < n:
        raise BoundaryMisuseError("node index out of range", node)
    cp = cn = math.nan
    if node > 0:
        i = node - 1
        qa = state.flow_up[i]
        cp = qa + c.ca[i] * state.head[node - 1] - c.friction[i] * qa * abs(qa)
    if node < n - 1:
        i = node
        qb = state.flow_down[i]
        cn = qb - c.ca[i] * state.head[node + 1] - c.friction[i] * qb * abs(qb)
    ca = c.ca[node - 1] if node > 0 else c.ca[0]
    return CharacteristicCoefficients(float(cp), float(cn), float(ca))


def cp_coefficient(q_a: float, h_a: float, ca: float, friction: float) -> float:
    return q_a + ca * h_a - friction * q_a * abs(q_a)


def cn_coefficient(q_b: float, h_b: float, ca: float, friction: float) -> float:
    return q_b - ca * h_b - friction * q_b * abs(q_b)


def interior_update(coeffs: CharacteristicCoefficients) -> tuple[float, float]:
    q = 0.5 * (coeffs.cp + coeffs.cn)
    return q, (coeffs.cp - q) / coeffs.ca


def upstream_reservoir_update(
    cn: float, ca: float, reservoir_head: float, entrance_loss: float, area: float, g: float,
) -> tuple[float, float]:
    """Supply reservoir with entrance loss: C- closed by the energy equation.

    The root of K1*Q^2 + Q - (cn + ca*H_R1) = 0 is evaluated in the
    cancellation-free form, which also covers K1 -> 0.
    """
    k1 = ca * (1.0 + entrance_loss) / (2.0 * g * area**2)
    c = cn + ca * reservoir_head
    disc = 1.0 + 4.0 * k1 * c
    if disc < 0:
        raise ReverseFlowUnsupportedError("reservoir inflow equation has no real root", 0)
    q = 2.0 * c / (1.0 + math.sqrt(disc))
    h = reservoir_head - (1.0 + entrance_loss) * q * q / (2.0 * g * area**2)
    return q, h


def discharge_coefficient(alpha: float) -> float:
    """Orifice discharge coefficient for an area ratio D0^2/D1^2 in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"area ratio must lie in [0, 1], got {alpha!r}")
    return 0.05959 + 0.0312 * alpha**2.1 - 0.184 * alpha**6


def valve_coefficient(tau: float, q0: float, ca: float, h_valve_steady: float, h_downstream: float) -> float:
    return (tau * q0) ** 2 / (ca * (h_valve_steady - h_downstream))


def valve_boundary_update(
    cp: float, ca: float, tau: float, q0: float, h_valve_steady: float, h_downstream: float,
) -> tuple[float, float]:
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"valve opening must lie in [0, 1], got {tau!r}")
    if tau == 0.0:
        return dead_end_update(cp, ca)
    if not h_valve_steady > h_downstream:
        raise DomainError("steady valve head must exceed the downstream head")
    cv = valve_coefficient(tau, q0, ca, h_valve_steady, h_downstream)
    return valve_update_cv(cp, ca, cv, h_downstream)


def valve_update_cv(
    cp: float, ca: float, cv: float, h_downstream: float, allow_reverse: bool = False,
) -> tuple[float, float]:
    """Valve boundary given the lumped coefficient Cv directly.

    With ``allow_reverse`` the orifice law is applied as Q|Q| = Cv*(cp - Q - ca*H_R2),
    so flow back out of the downstream reservoir is admitted instead of raising.
    """
    if cv == 0.0:
        return dead_end_update(cp, ca)
    drive = cp - ca * h_downstream
    if drive < 0:
        if not allow_reverse:
            raise ReverseFlowUnsupportedError("valve head below downstream reservoir (reverse flow)")
        q = 2.0 * cv * drive / (cv + math.sqrt(cv * cv - 4.0 * cv * drive))
    else:
        # q = (-cv + sqrt(cv^2 + 4 cv drive)) / 2 rewritten without cancellation
        q = 2.0 * cv * drive / (cv + math.sqrt(cv * cv + 4.0 * cv * drive))
    return q, (cp - q) / ca


def dead_end_update(cp: float, ca: float) -> tuple[float, float]:
    return 0.0, cp / ca


def leak_node_update(
    cp: float, cn: float, ca: float, lam: float, elevation: float = 0.0,
) -> tuple[float, float, float, float]:
    """Junction with an orifice leak Q_L = lam * sqrt(H - z).

    Returns (inflow, outflow, head, leak).  Continuity
    ``2*ca*h + lam*sqrt(h) = cp - cn - 2*ca*z`` is a quadratic in sqrt(h).
    When the right side is negative the leak stops and the node behaves as a
    plain junction.
    """
    if lam == 0.0:
        q, h = interior_update(CharacteristicCoefficients(cp, cn, ca))
        return q, q, h, 0.0
    drive = cp - cn - 2.0 * ca * elevation
    if drive <= 0.0:
        h = (cp - cn) / (2.0 * ca)
        return cp - ca * h, cn + ca * h, h, 0.0
    s = 2.0 * drive / (lam + math.sqrt(lam * lam + 8.0 * ca * drive))
    h = s * s + elevation
    leak = lam * s
    return cp - ca * h, cn + ca * h, h, leak


def leak_node_update_rate(cp: float, cn: float, ca: float, leak: float) -> tuple[float, float, float]:
    """Junction with a prescribed leak discharge (no orifice law)."""
    h = (cp - cn - leak) / (2.0 * ca)
    return cp - ca * h, cn + ca * h, h


@dataclass(frozen=True)
class BoundaryInputs:
    """Per-step terminal drive: reservoir heads and the valve coefficient."""

    upstream_head: float
    downstream_head: float
    valve_cv: float


def valve_cv_for(network: PipelineNetwork, steady: SolverState, tau: float, dt: float) -> float:
    if not network.has_valve:
        return 0.0
    ca = PipeConstants(network, dt).ca[-1]
    return valve_coefficient(tau, steady.flow_down[-1], ca, steady.head[-1], network.downstream_head)


def advance(
    state: SolverState,
    network: PipelineNetwork,
    inputs: BoundaryInputs,
    dt: float,
    leak_coefficients: Mapping[int, float] | None = None,
    leak_rates: Mapping[int, float] | None = None,
    constants: PipeConstants | None = None,
) -> SolverState:
    """One MOC step with the terminal driven by ``inputs``.

    Interior nodes in ``leak_coefficients`` use the orifice law; nodes in
    ``leak_rates`` take a prescribed leak discharge; the rest are plain
    junctions.
    """
    c = constants or PipeConstants(network, dt)
    n = network.n_nodes
    H, qu, qd = state.head, state.flow_up, state.flow_down
    ca, fr = c.ca, c.friction
    z = network.elevations
    head = np.empty(n)
    flow_up = np.empty(n - 1)
    flow_down = np.empty(n - 1)
    leak = np.zeros(n)
    lam_map = leak_coefficients or {}
    rate_map = leak_rates or {}

    # supply reservoir
    cn = cn_coefficient(qd[0], H[1], ca[0], fr[0])
    try:
        flow_up[0], head[0] = upstream_reservoir_update(
            cn, ca[0], inputs.upstream_head, network.entrance_loss, c.area[0], network.fluid.gravity
        )
    except MocError as exc:
        raise type(exc)(str(exc).split(": ", 1)[-1], 0) from None

    for j in range(1, n - 1):
        cp = cp_coefficient(qu[j - 1], H[j - 1], ca[j - 1], fr[j - 1])
        cn = cn_coefficient(qd[j], H[j + 1], ca[j], fr[j])
        if j in rate_map:
            flow_down[j - 1], flow_up[j], head[j] = leak_node_update_rate(cp, cn, ca[j], rate_map[j])
            leak[j] = rate_map[j]
        elif j in lam_map:
            flow_down[j - 1], flow_up[j], head[j], leak[j] = leak_node_update(
                cp, cn, ca[j], lam_map[j], z[j]
            )
        else:
            q = 0.5 * (cp + cn)
            flow_down[j - 1] = flow_up[j] = q
            head[j] = (cp - q) / ca[j]

    last = n - 1
    cp = cp_coefficient(qu[last - 1], H[last - 1], ca[last - 1], fr[last - 1])
    if network.has_valve:
        try:
            flow_down[-1], head[-1] = valve_update_cv(cp, ca[-1], inputs.valve_cv, inputs.downstream_head)
        except MocError as exc:
            raise type(exc)(str(exc), last) from None
    else:
        flow_down[-1], head[-1] = dead_end_update(cp, ca[-1])

    return SolverState(state.time + dt, head, flow_up, flow_down, leak)


def step(
    state: SolverState,
    network: PipelineNetwork,
    schedule: ValveSchedule,
    bursts,
    dt: float,
    steady: SolverState | None = None,
    constants: PipeConstants | None = None,
) -> SolverState:
    """Advance the full solution from t to t + dt.

    ``bursts`` is anything with a ``leak_coefficients()`` mapping (a
    :class:`~pipeburst.burst.BurstRegistry`) or a plain ``{node: lambda}``
    dict.  ``steady`` is the initial operating point that calibrates the
    valve; it is recomputed when omitted.
    """
    c = constants or PipeConstants(network, dt)
    t_new = state.time + dt
    cv = 0.0
    if network.has_valve:
        steady = steady if steady is not None else steady_state(network)
        tau = schedule(t_new)
        if not 0.0 <= tau <= 1.0:
            raise DomainError(f"valve opening must lie in [0, 1], got {tau!r}")
        cv = valve_coefficient(tau, steady.flow_down[-1], c.ca[-1], steady.head[-1], network.downstream_head)
    inputs = BoundaryInputs(network.upstream_head, network.downstream_head or 0.0, cv)
    if bursts is None:
        lam = {}
    elif hasattr(bursts, "leak_coefficients"):
        lam = bursts.leak_coefficients()
    else:
        lam = dict(bursts)
    return advance(state, network, inputs, dt, leak_coefficients=lam, constants=c)

