"""Truth runs, synthetic measurements, EKF runs and their files.

Time-series files are CSV with a header row and one row per time level;
floats are written with 17 significant digits so a read-back is exact.
Column names use 1-based node numbers: ``time, H1..HN, Q1_1, Q1_2, ...,
QL2..QL(N-1)`` where ``Qi_1``/``Qi_2`` are the upstream/downstream ends of
pipe i.  A run manifest is the scenario text plus a ``[manifest]`` section,
so it can be fed straight back to ``simulate``.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .burst import BurstEvent, BurstRegistry, evaluate_bursts, make_rng
from .ekf import FilterRun, NoiseConfig, run_filter
from .hydraulics import SolverState, steady_state
from .moc import BoundaryInputs, PipeConstants, TimeGrid, step, valve_cv_for
from .scenario import ScenarioConfig, dump_scenario


def package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunArtifacts:
    config: ScenarioConfig
    times: np.ndarray
    head: np.ndarray        # (steps+1, N)
    flow_up: np.ndarray     # (steps+1, N-1)
    flow_down: np.ndarray   # (steps+1, N-1)
    leak: np.ndarray        # (steps+1, N); boundary columns are zero
    registry: BurstRegistry
    inputs: list[BoundaryInputs] = field(repr=False, default_factory=list)

    @property
    def events(self) -> tuple[BurstEvent, ...]:
        return self.registry.events

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def state(self, k: int) -> SolverState:
        return SolverState(self.times[k], self.head[k], self.flow_up[k], self.flow_down[k], self.leak[k])

    def manifest(self) -> dict[str, str]:
        net = self.config.network
        return {
            "config_sha256": self.config.digest(),
            "burst_seed": str(self.config.burst.rng_seed),
            "noise_seed": str(self.config.noise_seed),
            "wave_speed": repr(float(net.wave_speeds()[0])),
            "dt": repr(float(self.times[1] - self.times[0])) if self.steps else "nan",
            "steps": str(self.steps),
            "version": package_version(),
        }


def boundary_inputs(cfg: ScenarioConfig, grid: TimeGrid, steady: SolverState) -> list[BoundaryInputs]:
    """Terminal drive at every time level, shared by truth run and filter."""
    net = cfg.network
    sched = cfg.schedule()
    down = net.downstream_head if net.has_valve else 0.0
    return [
        BoundaryInputs(net.upstream_head, down, valve_cv_for(net, steady, sched(t), grid.dt))
        for t in grid.times()
    ]


def simulate(cfg: ScenarioConfig, probability=None) -> RunArtifacts:
    """Truth run: MOC stepping with bursts decided after every step.

    A burst found at step k changes the node law from step k+1 on.  Forced
    bursts (node, step) are registered at their step regardless of mode.
    ``probability`` overrides the burst probability law (see
    :func:`~pipeburst.burst.evaluate_bursts`).
    """
    net = cfg.network
    grid = cfg.time_grid()
    consts = PipeConstants(net, grid.dt)
    s0 = steady_state(net)
    sched = cfg.schedule()
    registry = BurstRegistry.for_network(net)
    rng = make_rng(cfg.burst.rng_seed)
    forced = {}
    for node, k in cfg.forced_bursts:
        forced.setdefault(k, []).append(node)

    n, steps = net.n_nodes, grid.steps
    head = np.empty((steps + 1, n))
    flow_up = np.empty((steps + 1, n - 1))
    flow_down = np.empty((steps + 1, n - 1))
    leak = np.empty((steps + 1, n))
    state = s0
    head[0], flow_up[0], flow_down[0], leak[0] = s0.head, s0.flow_up, s0.flow_down, s0.leak_rate
    for k in range(1, steps + 1):
        state = step(state, net, sched, registry, grid.dt, steady=s0, constants=consts)
        state.time = k * grid.dt  # avoid accumulated rounding in the clock
        for node in forced.get(k, ()):
            event = BurstEvent(k, state.time, node, float("nan"), 1.0, None, forced=True)
            registry = registry.with_burst(node, k, cfg.burst.default_lambda, event)
        registry = evaluate_bursts(state, net, cfg.burst, registry, rng, k, probability)
        head[k], flow_up[k], flow_down[k], leak[k] = state.head, state.flow_up, state.flow_down, state.leak_rate
    return RunArtifacts(cfg, grid.times(), head, flow_up, flow_down, leak, registry, boundary_inputs(cfg, grid, s0))


def simulate_measurements(truth: RunArtifacts, variance: float, seed: int) -> np.ndarray:
    """End heads of a truth run plus white Gaussian noise."""
    return add_measurement_noise(truth.head[:, [0, -1]], variance, seed)


def add_measurement_noise(z: np.ndarray, variance: float, seed: int) -> np.ndarray:
    """Noise stream seeded apart from the burst stream of the same seed."""
    z = np.array(z, dtype=float)
    if variance > 0:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1])))
        z += rng.normal(0.0, np.sqrt(variance), z.shape)
    return z


def estimate(cfg: ScenarioConfig, measurements: np.ndarray, noise: NoiseConfig | None = None) -> FilterRun:
    """EKF over a measurement series aligned with the scenario time grid."""
    net = cfg.network
    z = np.asarray(measurements, dtype=float)
    grid = TimeGrid(cfg.time_grid().dt, len(z) - 1)
    s0 = steady_state(net)
    noise = noise or NoiseConfig.default(net.n_nodes)
    return run_filter(z, boundary_inputs(cfg, grid, s0), s0, noise, net, grid.dt)


def timeseries_columns(n_nodes: int) -> list[str]:
    cols = ["time"] + [f"H{i + 1}" for i in range(n_nodes)]
    for i in range(n_nodes - 1):
        cols += [f"Q{i + 1}_1", f"Q{i + 1}_2"]
    cols += [f"QL{i + 1}" for i in range(1, n_nodes - 1)]
    return cols


def _rows(times, head, flow_up, flow_down, leak):
    m = len(times)
    flows = np.empty((m, 2 * flow_up.shape[1]))
    flows[:, 0::2] = flow_up
    flows[:, 1::2] = flow_down
    return np.column_stack([times, head, flows, leak[:, 1:-1]])


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % v for v in row])


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r if row]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def write_timeseries(artifacts: RunArtifacts, path) -> None:
    n = artifacts.head.shape[1]
    rows = _rows(artifacts.times, artifacts.head, artifacts.flow_up, artifacts.flow_down, artifacts.leak)
    _write_table(path, timeseries_columns(n), rows)


def write_estimates(run: FilterRun, path) -> None:
    lay = run.layout
    x = run.estimates
    leak = np.zeros((len(x), lay.n_nodes))
    leak[:, 1:-1] = x[:, lay.leak]
    rows = _rows(run.times, x[:, lay.head], x[:, lay.flow_up], x[:, lay.flow_down], leak)
    _write_table(path, timeseries_columns(lay.n_nodes), rows)


@dataclass
class TimeSeries:
    """A time-series file read back into arrays (0-based node columns)."""

    times: np.ndarray
    head: np.ndarray
    flow_up: np.ndarray
    flow_down: np.ndarray
    leak: np.ndarray


def read_timeseries(path) -> TimeSeries:
    header, data = _read_table(path)
    n = (len(header) + 3) // 4
    if header != timeseries_columns(n):
        raise ValueError(f"{path}: unexpected columns {header[:4]}...")
    leak = np.zeros((len(data), n))
    leak[:, 1:-1] = data[:, 3 * n - 1:]
    flows = data[:, 1 + n:3 * n - 1]
    return TimeSeries(data[:, 0], data[:, 1:1 + n], flows[:, 0::2], flows[:, 1::2], leak)


def write_measurements(times, z, path) -> None:
    _write_table(path, ["time", "z1", "zN"], np.column_stack([times, z]))


def read_measurements(path) -> tuple[np.ndarray, np.ndarray]:
    header, data = _read_table(path)
    if header[:1] != ["time"] or len(header) != 3:
        raise ValueError(f"{path}: expected columns time,z1,zN")
    return data[:, 0], data[:, 1:]


def write_events(events, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "node", "stress", "probability", "draw", "forced"])
        for e in events:
            w.writerow([e.step, "%.17g" % e.time, e.node + 1, "%.17g" % e.stress,
                        "%.17g" % e.probability, "" if e.draw is None else "%.17g" % e.draw, int(e.forced)])


def write_manifest(artifacts: RunArtifacts, path) -> None:
    text = dump_scenario(artifacts.config)
    lines = ["[manifest]"] + [f"{k} = {v}" for k, v in artifacts.manifest().items()]
    Path(path).write_text(text + "\n" + "\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path, encoding="utf-8")
    return dict(parser["manifest"]) if "manifest" in parser else {}


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run(artifacts: RunArtifacts, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "timeseries": out / "truth.csv",
        "events": out / "events.csv",
        "manifest": out / "manifest.ini",
    }
    write_timeseries(artifacts, paths["timeseries"])
    write_events(artifacts.events, paths["events"])
    write_manifest(artifacts, paths["manifest"])
    return paths


def asymptotic_mean(series: np.ndarray, fraction: float = 0.25) -> np.ndarray:
    """Column means over the final ``fraction`` of the rows."""
    series = np.asarray(series)
    start = len(series) - max(1, int(round(len(series) * fraction)))
    return series[start:].mean(axis=0)


def compare_leaks(truth_leak: np.ndarray, est_leak: np.ndarray, fraction: float = 0.25) -> dict:
    """Asymptotic truth vs estimate leak per interior node (0-based columns)."""
    t = asymptotic_mean(truth_leak[:, 1:-1], fraction)
    e = asymptotic_mean(est_leak[:, 1:-1], fraction)
    return {"truth": t, "estimate": e, "abs_error": np.abs(e - t)}

