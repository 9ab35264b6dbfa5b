"""Extended Kalman filter over the full MOC state of a serial pipeline.

State layout for N nodes (M = 4N - 4 entries)::

    [H_1 .. H_N,  Q_11, Q_12, Q_21, Q_22, ..., Q_(N-1)1, Q_(N-1)2,  QL_2 .. QL_(N-1)]

Leak discharges are random-walk parameters: the process model holds them
constant and lets process noise move them, so the filter infers leaks from
the flow imbalance they must explain.  Only the two end heads are measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hydraulics import PipelineNetwork, SolverState
from .moc import BoundaryInputs, PipeConstants, ReverseFlowUnsupportedError


class FilterError(RuntimeError):
    pass


class LinearizationError(FilterError):
    pass


class NumericalFailureError(FilterError):
    pass


EkfInputs = BoundaryInputs


@dataclass
class EkfState:
    x: np.ndarray
    P: np.ndarray
    time: float = 0.0


@dataclass(frozen=True)
class NoiseConfig:
    R: np.ndarray
    Q: np.ndarray

    @classmethod
    def default(
        cls, n_nodes: int, head_var: float = 0.1, flow_var: float = 0.01,
        leak_var: float = 5e-5, meas_var: float = 0.001,
    ) -> NoiseConfig:
        n = n_nodes
        q = np.concatenate([
            np.full(n, head_var), np.full(2 * (n - 1), flow_var), np.full(n - 2, leak_var)
        ])
        return cls(R=meas_var * np.eye(2), Q=np.diag(q))


class StateLayout:
    """Index bookkeeping for the packed state vector."""

    def __init__(self, n_nodes: int):
        n = n_nodes
        self.n_nodes = n
        self.size = 4 * n - 4
        self.head = slice(0, n)
        self.flow = slice(n, 3 * n - 2)
        self.flow_up = slice(n, 3 * n - 2, 2)
        self.flow_down = slice(n + 1, 3 * n - 2, 2)
        self.leak = slice(3 * n - 2, 4 * n - 4)
        self.measured = (0, n - 1)

    def leak_index(self, node: int) -> int:
        if not 0 < node < self.n_nodes - 1:
            raise IndexError(f"node {node} has no leak state")
        return 3 * self.n_nodes - 2 + node - 1


def pack(state: SolverState, registry=None) -> np.ndarray:
    """Flatten a solver state; boundary leak entries are dropped."""
    n = state.head.size
    lay = StateLayout(n)
    x = np.empty(lay.size)
    x[lay.head] = state.head
    x[lay.flow_up] = state.flow_up
    x[lay.flow_down] = state.flow_down
    x[lay.leak] = state.leak_rate[1:-1]
    return x


def unpack(x: np.ndarray, network: PipelineNetwork | int, time: float = 0.0) -> SolverState:
    n = network if isinstance(network, int) else network.n_nodes
    lay = StateLayout(n)
    x = np.asarray(x, dtype=float)
    if x.shape != (lay.size,):
        raise ValueError(f"state vector must have length {lay.size} for {n} nodes, got {x.shape}")
    leak = np.zeros(n)
    leak[1:-1] = x[lay.leak]
    return SolverState(time, x[lay.head].copy(), x[lay.flow_up].copy(), x[lay.flow_down].copy(), leak)


class ProcessModel:
    """One MOC step on packed states, vectorised over a batch of states.

    Every interior node is a junction with a prescribed leak discharge taken
    from the state; the terminal is a valve (driven by ``u.valve_cv``) or a
    dead end.
    """

    def __init__(self, network: PipelineNetwork, dt: float):
        self.network = network
        self.dt = dt
        self.layout = StateLayout(network.n_nodes)
        c = PipeConstants(network, dt)
        self.ca = c.ca
        self.friction = c.friction
        self.area0 = c.area[0]
        self.g = network.fluid.gravity
        self.loss = 1.0 + network.entrance_loss

    def __call__(self, x: np.ndarray, u: BoundaryInputs) -> np.ndarray:
        return self.batch(np.asarray(x, dtype=float)[None, :], u)[0]

    def batch(self, X: np.ndarray, u: BoundaryInputs) -> np.ndarray:
        lay = self.layout
        n = lay.n_nodes
        ca, fr = self.ca, self.friction
        H = X[:, lay.head]
        qu = X[:, lay.flow_up]
        qd = X[:, lay.flow_down]
        leak = X[:, lay.leak]

        # cp[:, i] reaches node i+1 through pipe i; cn[:, i] reaches node i through pipe i
        cp = qu + ca * H[:, :-1] - fr * qu * np.abs(qu)
        cn = qd - ca * H[:, 1:] - fr * qd * np.abs(qd)

        out = np.empty_like(X)
        Hn = out[:, lay.head]
        qu_n = np.empty_like(qu)
        qd_n = np.empty_like(qd)

        # supply reservoir
        k1 = ca[0] * self.loss / (2.0 * self.g * self.area0**2)
        c0 = cn[:, 0] + ca[0] * u.upstream_head
        disc = 1.0 + 4.0 * k1 * c0
        if np.any(disc < 0):
            raise ReverseFlowUnsupportedError("reservoir inflow equation has no real root", 0)
        q0 = 2.0 * c0 / (1.0 + np.sqrt(disc))
        qu_n[:, 0] = q0
        Hn[:, 0] = u.upstream_head - self.loss * q0 * q0 / (2.0 * self.g * self.area0**2)

        # interior junctions with prescribed leak
        cpi = cp[:, :-1]
        cni = cn[:, 1:]
        cai = ca[1:]
        plain = leak == 0.0
        q_plain = 0.5 * (cpi + cni)
        h_plain = (cpi - q_plain) / cai
        h_leak = (cpi - cni - leak) / (2.0 * cai)
        h = np.where(plain, h_plain, h_leak)
        Hn[:, 1:-1] = h
        qd_n[:, :-1] = np.where(plain, q_plain, cpi - cai * h)
        qu_n[:, 1:] = np.where(plain, q_plain, cni + cai * h)

        # terminal
        cpl = cp[:, -1]
        cal = ca[-1]
        cv = u.valve_cv if self.network.has_valve else 0.0
        if cv == 0.0:
            qd_n[:, -1] = 0.0
            Hn[:, -1] = cpl / cal
        else:
            # signed orifice law: noisy estimates may call for reverse flow
            drive = cpl - cal * u.downstream_head
            root = np.sqrt(cv * cv + 4.0 * cv * np.abs(drive))
            qv = 2.0 * cv * drive / (cv + root)
            qd_n[:, -1] = qv
            Hn[:, -1] = (cpl - qv) / cal

        out[:, lay.flow_up] = qu_n
        out[:, lay.flow_down] = qd_n
        out[:, lay.leak] = leak
        return out


def process_model(x: np.ndarray, u: BoundaryInputs, dt: float, network: PipelineNetwork) -> np.ndarray:
    return ProcessModel(network, dt)(x, u)


def jacobian(f, x: np.ndarray, u=None, dt: float | None = None, batched: bool | None = None) -> np.ndarray:
    """Forward-difference Jacobian of ``f(x, u)`` at ``x``.

    Column j uses step max(1e-7, 1e-7*|x_j|).  ``f`` may be a
    :class:`ProcessModel`, in which case all columns are evaluated as one
    batch.
    """
    x = np.asarray(x, dtype=float)
    m = x.size
    steps = np.maximum(1e-7, 1e-7 * np.abs(x))
    use_batch = hasattr(f, "batch") if batched is None else batched
    if use_batch:
        X = np.repeat(x[None, :], m + 1, axis=0)
        X[np.arange(1, m + 1), np.arange(m)] += steps
        Y = f.batch(X, u)
        f0 = Y[0]
        J = (Y[1:] - f0).T / steps
    else:
        f0 = np.asarray(f(x, u), dtype=float)
        J = np.empty((f0.size, m))
        for j in range(m):
            xp = x.copy()
            xp[j] += steps[j]
            J[:, j] = (np.asarray(f(xp, u), dtype=float) - f0) / steps[j]
    if not np.all(np.isfinite(J)):
        raise LinearizationError("Jacobian has non-finite entries")
    return J


def central_jacobian(f, x: np.ndarray, u=None) -> np.ndarray:
    """Central-difference Jacobian; reference for checking :func:`jacobian`."""
    x = np.asarray(x, dtype=float)
    steps = np.maximum(1e-7, 1e-7 * np.abs(x))
    cols = []
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        cols.append((np.asarray(f(xp, u)) - np.asarray(f(xm, u))) / (2 * steps[j]))
    return np.column_stack(cols)


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(ekf: EkfState, u, noise: NoiseConfig, dt: float, f) -> EkfState:
    x_prior = f(ekf.x, u)
    J = jacobian(f, ekf.x, u)
    P_prior = symmetrize(J @ ekf.P @ J.T + noise.Q)
    return EkfState(x_prior, P_prior, ekf.time + dt)


def measurement_matrix(size: int, measured=(0, -1)) -> np.ndarray:
    Hm = np.zeros((len(measured), size))
    for row, idx in enumerate(measured):
        Hm[row, idx] = 1.0
    return Hm


def kalman_gain(P: np.ndarray, Hm: np.ndarray, R: np.ndarray) -> np.ndarray:
    S = Hm @ P @ Hm.T + R
    try:
        return np.linalg.solve(S, Hm @ P).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("singular innovation covariance") from exc


def update(
    ekf: EkfState, z: np.ndarray, noise: NoiseConfig,
    Hm: np.ndarray | None = None, leak_slice: slice | None = None,
) -> EkfState:
    """Measurement update with the two end heads; leak states projected to >= 0."""
    x, P = ekf.x, ekf.P
    if Hm is None:
        Hm = measurement_matrix(x.size)
    K = kalman_gain(P, Hm, noise.R)
    x_post = x + K @ (np.asarray(z, dtype=float) - Hm @ x)
    P_post = symmetrize((np.eye(x.size) - K @ Hm) @ P)
    if leak_slice is not None:
        x_post[leak_slice] = np.maximum(x_post[leak_slice], 0.0)
    return EkfState(x_post, P_post, ekf.time)


def joseph_update(P: np.ndarray, K: np.ndarray, Hm: np.ndarray, R: np.ndarray) -> np.ndarray:
    A = np.eye(P.shape[0]) - K @ Hm
    return A @ P @ A.T + K @ R @ K.T


@dataclass
class FilterRun:
    times: np.ndarray
    priors: np.ndarray      # x_k^- per step
    estimates: np.ndarray   # x_k^+ per step
    variances: np.ndarray   # diag(P_k^+) per step
    layout: StateLayout

    @property
    def leak(self) -> np.ndarray:
        return self.estimates[:, self.layout.leak]

    @property
    def head(self) -> np.ndarray:
        return self.estimates[:, self.layout.head]


def run_filter(
    measurements: np.ndarray,
    inputs: list[BoundaryInputs],
    init: SolverState,
    noise: NoiseConfig,
    network: PipelineNetwork,
    dt: float,
    p0: float = 0.1,
    keep_covariance: bool = False,
) -> FilterRun:
    """Alternate update/predict over aligned measurement and input series.

    ``measurements[k]`` and ``inputs[k]`` belong to time k*dt; the first
    measurement updates the steady no-leak prior directly.
    """
    z = np.asarray(measurements, dtype=float)
    if len(inputs) != len(z):
        raise ValueError("measurement and input series must have equal length")
    f = ProcessModel(network, dt)
    lay = f.layout
    Hm = measurement_matrix(lay.size, lay.measured)
    ekf = EkfState(pack(init), p0 * np.eye(lay.size), init.time)
    steps = len(z)
    priors = np.empty((steps, lay.size))
    est = np.empty((steps, lay.size))
    var = np.empty((steps, lay.size))
    covs = []
    for k in range(steps):
        if k > 0:
            ekf = predict(ekf, inputs[k], noise, dt, f)
        priors[k] = ekf.x
        ekf = update(ekf, z[k], noise, Hm, lay.leak)
        est[k] = ekf.x
        var[k] = np.diag(ekf.P)
        if keep_covariance:
            covs.append(ekf.P.copy())
    run = FilterRun(init.time + dt * np.arange(steps), priors, est, var, lay)
    if keep_covariance:
        run.covariances = covs
    return run
