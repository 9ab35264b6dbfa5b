"""Scenario files and the built-in reference cases.

Scenarios are INI text (``configparser``).  Node numbers in files are
1-based, matching the usual labelling of a pipeline (node 1 is the supply
reservoir); the Python API is 0-based.

Example::

    [fluid]
    density = 1000
    bulk_modulus = 2.1994e9
    gravity = 9.8

    [pipes]
    length = 100              ; one value for every pipe, or a comma list
    diameter = 0.5
    wall_thickness = 0.01905
    friction_factor = 0.015
    youngs_modulus = 4.1e11
    yield_stress = 8e6

    [nodes]
    elevations = 0, 0, 0, 0, 0, 0, 0
    terminal = valve          ; valve | dead_end

    [boundary]
    upstream_head = 40
    downstream_head = 30

    [valve]
    closure_time = 20
    shape = power             ; linear | power
    exponent = 1.5

    [burst]
    mode = deterministic      ; none | deterministic | probabilistic
    forced = 6@400            ; node@step pairs

    [run]
    duration = 100            ; or: steps = 1389
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace

from .burst import BurstMode, BurstModelConfig
from .hydraulics import (
    Fluid,
    HydraulicsError,
    NetworkNode,
    NodeKind,
    PipelineNetwork,
    PipeSegment,
)
from .moc import ValveSchedule, TimeGrid


class ScenarioError(ValueError):
    """Invalid scenario text; ``field`` or ``line`` locate the problem."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    network: PipelineNetwork
    closure_time: float | None = 20.0
    valve_shape: str = "linear"
    valve_exponent: float = 1.0
    burst: BurstModelConfig = field(default_factory=BurstModelConfig)
    steps: int | None = None
    duration: float | None = None
    forced_bursts: tuple[tuple[int, int], ...] = ()
    noise_variance: float = 0.04
    noise_seed: int = 1
    output_dir: str = "out"

    def schedule(self) -> ValveSchedule:
        if not self.network.has_valve:
            return ValveSchedule(0.0)
        if self.valve_shape == "linear":
            return ValveSchedule(self.closure_time)
        m = self.valve_exponent
        return ValveSchedule(self.closure_time, lambda s: (1.0 - s) ** m)

    def time_grid(self) -> TimeGrid:
        probe = TimeGrid.for_network(self.network, 0)
        if self.steps is not None:
            steps = self.steps
        else:
            steps = math.ceil(self.duration / probe.dt - 1e-9)
        return TimeGrid(probe.dt, int(steps))

    def with_overrides(self, mode=None, seed=None, steps=None, noise_seed=None, output_dir=None) -> ScenarioConfig:
        cfg = self
        if mode is not None or seed is not None:
            cfg = replace(cfg, burst=replace(
                cfg.burst,
                mode=BurstMode(mode) if mode is not None else cfg.burst.mode,
                rng_seed=int(seed) if seed is not None else cfg.burst.rng_seed,
            ))
        if steps is not None:
            cfg = replace(cfg, steps=int(steps), duration=None)
        if noise_seed is not None:
            cfg = replace(cfg, noise_seed=int(noise_seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg

    def digest(self) -> str:
        return hashlib.sha256(dump_scenario(self).encode()).hexdigest()


_SCHEMA = {
    "scenario": {"name"},
    "fluid": {"density", "bulk_modulus", "gravity"},
    "pipes": {
        "count", "length", "diameter", "wall_thickness", "friction_factor",
        "youngs_modulus", "anchoring_coefficient", "yield_stress",
    },
    "nodes": {"elevations", "terminal"},
    "boundary": {"upstream_head", "downstream_head", "entrance_loss", "valve_discharge_coefficient"},
    "valve": {"closure_time", "shape", "exponent"},
    "burst": {"mode", "yield_stress", "threshold_fraction", "lambda", "seed", "forced"},
    "run": {"duration", "steps"},
    "noise": {"variance", "seed"},
    "output": {"directory"},
    "manifest": None,  # free-form, written by runs and ignored on read
}

_REQUIRED = {
    "fluid": {"density", "bulk_modulus", "gravity"},
    "pipes": {"length", "diameter", "wall_thickness", "friction_factor", "youngs_modulus"},
    "nodes": {"elevations"},
    "boundary": {"upstream_head"},
}


def _number(section: configparser.SectionProxy, key: str, default=None) -> float:
    name = f"{section.name}.{key}"
    if key not in section:
        if default is None:
            raise ScenarioError("missing required value", name)
        return default
    try:
        value = float(section[key])
    except ValueError:
        raise ScenarioError(f"not a number: {section[key]!r}", name) from None
    if not math.isfinite(value):
        raise ScenarioError("must be finite", name)
    return value


def _integer(section, key: str, default=None) -> int:
    value = _number(section, key, default)
    if value != int(value):
        raise ScenarioError("must be an integer", f"{section.name}.{key}")
    return int(value)


def _number_list(section, key: str, count: int | None = None) -> list[float]:
    name = f"{section.name}.{key}"
    raw = [item.strip() for item in section[key].split(",") if item.strip()]
    try:
        values = [float(item) for item in raw]
    except ValueError:
        raise ScenarioError(f"not a number list: {section[key]!r}", name) from None
    if count is not None:
        if len(values) == 1:
            values = values * count
        elif len(values) != count:
            raise ScenarioError(f"expected 1 or {count} values, got {len(values)}", name)
    return values


def _parse_forced(text: str) -> tuple[tuple[int, int], ...]:
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            node, step = item.split("@")
            pairs.append((int(node) - 1, int(step)))
        except ValueError:
            raise ScenarioError(f"expected node@step, got {item!r}", "burst.forced") from None
    return tuple(pairs)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and validate scenario text, or return a preset by name."""
    if text.strip() in PRESETS:
        return preset(text.strip())
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ScenarioError("syntax error", line=line) from None
    except configparser.Error as exc:
        raise ScenarioError(f"syntax error: {exc.message}", line=getattr(exc, "lineno", None)) from None

    for name in parser.sections():
        if name not in _SCHEMA:
            raise ScenarioError("unknown section", f"[{name}]")
        allowed = _SCHEMA[name]
        if allowed is None:
            continue
        for key in parser[name]:
            if key not in allowed:
                raise ScenarioError("unknown key", f"{name}.{key}")
    for name, keys in _REQUIRED.items():
        if name not in parser:
            raise ScenarioError("missing section", f"[{name}]")
        for key in keys:
            if key not in parser[name]:
                raise ScenarioError("missing required value", f"{name}.{key}")

    def section(name):
        return parser[name] if name in parser else parser[parser.default_section]

    sf = parser["fluid"]
    try:
        fluid = Fluid(_number(sf, "density"), _number(sf, "bulk_modulus"), _number(sf, "gravity"))
    except HydraulicsError as exc:
        raise ScenarioError(str(exc), "fluid") from None

    sn = parser["nodes"]
    elevations = _number_list(sn, "elevations")
    n = len(elevations)
    if n < 3:
        raise ScenarioError("need at least 3 nodes", "nodes.elevations")
    terminal = sn.get("terminal", "valve").strip()
    if terminal not in ("valve", "dead_end"):
        raise ScenarioError(f"must be valve or dead_end, got {terminal!r}", "nodes.terminal")

    sp = parser["pipes"]
    n_pipes = n - 1
    if "count" in sp and _integer(sp, "count") != n_pipes:
        raise ScenarioError(
            f"pipes.count={_integer(sp, 'count')} but {n} nodes need {n_pipes} pipes", "pipes.count"
        )
    columns = {}
    for key in ("length", "diameter", "wall_thickness", "friction_factor", "youngs_modulus"):
        columns[key] = _number_list(sp, key, n_pipes)
    columns["anchoring_coefficient"] = (
        _number_list(sp, "anchoring_coefficient", n_pipes) if "anchoring_coefficient" in sp else [1.0] * n_pipes
    )
    pipes = []
    for i in range(n_pipes):
        try:
            pipes.append(PipeSegment(**{k: v[i] for k, v in columns.items()}))
        except HydraulicsError as exc:
            raise ScenarioError(str(exc), f"pipes[{i + 1}]") from None

    sb = parser["boundary"]
    sburst = section("burst")
    yield_stress = _number(sp, "yield_stress", _number(sburst, "yield_stress", 8e6))
    kinds = (
        [NodeKind.SUPPLY_RESERVOIR]
        + [NodeKind.INTERIOR] * (n - 2)
        + [NodeKind.VALVE_TO_RESERVOIR if terminal == "valve" else NodeKind.DEAD_END]
    )
    nodes = [NetworkNode(i, elevations[i], kinds[i]) for i in range(n)]
    downstream = _number(sb, "downstream_head") if "downstream_head" in sb else None
    if terminal == "valve" and downstream is None:
        raise ScenarioError("required for a valve terminal", "boundary.downstream_head")
    try:
        network = PipelineNetwork(
            fluid=fluid,
            nodes=nodes,
            pipes=pipes,
            yield_stress=yield_stress,
            upstream_head=_number(sb, "upstream_head"),
            downstream_head=downstream if terminal == "valve" else None,
            entrance_loss=_number(sb, "entrance_loss", 0.5),
            valve_discharge_coefficient=_number(sb, "valve_discharge_coefficient", 0.6),
        )
        TimeGrid.for_network(network, 0)
    except (HydraulicsError, ValueError) as exc:
        raise ScenarioError(str(exc), "network") from None

    sv = section("valve")
    closure_time = None
    shape, exponent = "linear", 1.0
    if terminal == "valve":
        closure_time = _number(sv, "closure_time", 20.0)
        if closure_time < 0:
            raise ScenarioError("must be >= 0", "valve.closure_time")
        shape = sv.get("shape", "linear").strip()
        if shape not in ("linear", "power"):
            raise ScenarioError(f"must be linear or power, got {shape!r}", "valve.shape")
        exponent = _number(sv, "exponent", 1.0)
        if exponent <= 0:
            raise ScenarioError("must be > 0", "valve.exponent")

    try:
        burst = BurstModelConfig(
            mode=sburst.get("mode", "deterministic").strip(),
            yield_stress=yield_stress,
            threshold_fraction=_number(sburst, "threshold_fraction", 0.8),
            default_lambda=_number(sburst, "lambda", 0.001),
            rng_seed=_integer(sburst, "seed", 0),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), "burst") from None
    forced = _parse_forced(sburst.get("forced", ""))
    for node, stp in forced:
        if not 0 < node < n - 1:
            raise ScenarioError(f"node {node + 1} is not an interior node", "burst.forced")
        if stp < 1:
            raise ScenarioError("step must be >= 1", "burst.forced")

    sr = section("run")
    steps = duration = None
    if "steps" in sr:
        steps = _integer(sr, "steps")
        if steps < 1:
            raise ScenarioError("must be >= 1", "run.steps")
    else:
        duration = _number(sr, "duration", 100.0)
        if duration <= 0:
            raise ScenarioError("must be > 0", "run.duration")

    snoise = section("noise")
    variance = _number(snoise, "variance", 0.04)
    if variance < 0:
        raise ScenarioError("must be >= 0", "noise.variance")

    return ScenarioConfig(
        name=section("scenario").get("name", "custom").strip(),
        network=network,
        closure_time=closure_time,
        valve_shape=shape,
        valve_exponent=exponent,
        burst=burst,
        steps=steps,
        duration=duration,
        forced_bursts=forced,
        noise_variance=variance,
        noise_seed=_integer(snoise, "seed", 1),
        output_dir=section("output").get("directory", "out").strip(),
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_list(values) -> str:
    values = [float(v) for v in values]
    if all(v == values[0] for v in values):
        return _fmt(values[0])
    return ", ".join(_fmt(v) for v in values)


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Serialise a config back to scenario text that parses to an equal config."""
    net = cfg.network
    pipes = net.pipes
    lines = [
        "[scenario]", f"name = {cfg.name}", "",
        "[fluid]",
        f"density = {_fmt(net.fluid.density)}",
        f"bulk_modulus = {_fmt(net.fluid.bulk_modulus)}",
        f"gravity = {_fmt(net.fluid.gravity)}", "",
        "[pipes]",
    ]
    for key in ("length", "diameter", "wall_thickness", "friction_factor", "youngs_modulus", "anchoring_coefficient"):
        lines.append(f"{key} = {_fmt_list(getattr(p, key) for p in pipes)}")
    lines += [f"yield_stress = {_fmt(net.yield_stress)}", ""]
    lines += [
        "[nodes]",
        f"elevations = {', '.join(_fmt(z) for z in net.elevations)}",
        f"terminal = {'valve' if net.has_valve else 'dead_end'}", "",
        "[boundary]",
        f"upstream_head = {_fmt(net.upstream_head)}",
    ]
    if net.has_valve:
        lines.append(f"downstream_head = {_fmt(net.downstream_head)}")
    lines += [
        f"entrance_loss = {_fmt(net.entrance_loss)}",
        f"valve_discharge_coefficient = {_fmt(net.valve_discharge_coefficient)}", "",
    ]
    if net.has_valve:
        lines += [
            "[valve]",
            f"closure_time = {_fmt(cfg.closure_time)}",
            f"shape = {cfg.valve_shape}",
            f"exponent = {_fmt(cfg.valve_exponent)}", "",
        ]
    b = cfg.burst
    lines += [
        "[burst]",
        f"mode = {b.mode.value}",
        f"threshold_fraction = {_fmt(b.threshold_fraction)}",
        f"lambda = {_fmt(b.default_lambda)}",
        f"seed = {b.rng_seed}",
    ]
    if cfg.forced_bursts:
        lines.append("forced = " + ", ".join(f"{node + 1}@{stp}" for node, stp in cfg.forced_bursts))
    lines += ["", "[run]"]
    lines.append(f"steps = {cfg.steps}" if cfg.steps is not None else f"duration = {_fmt(cfg.duration)}")
    lines += [
        "", "[noise]", f"variance = {_fmt(cfg.noise_variance)}", f"seed = {cfg.noise_seed}",
        "", "[output]", f"directory = {cfg.output_dir}", "",
    ]
    return "\n".join(lines)


def load_scenario(source: str) -> ScenarioConfig:
    """Preset name or path to a scenario file."""
    if source in PRESETS:
        return preset(source)
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return parse_scenario(text)


# Horizontal line closed by a gate valve over 20 s.  The opening follows a
# power-law gate curve with exponent 1.5.
CASE_A = """
[scenario]
name = paper-case-a

[fluid]
density = 1000
gravity = 9.8
bulk_modulus = 2.1994e9

[pipes]
length = 100
diameter = 0.5
friction_factor = 0.015
wall_thickness = 0.01905
youngs_modulus = 4.1e11
anchoring_coefficient = 1
yield_stress = 8e6

[nodes]
elevations = 0, 0, 0, 0, 0, 0, 0
terminal = valve

[boundary]
upstream_head = 40
downstream_head = 30
entrance_loss = 0.5
valve_discharge_coefficient = 0.6

[valve]
closure_time = 20
shape = power
exponent = 1.5

[burst]
mode = deterministic
threshold_fraction = 0.8
lambda = 0.001
seed = 0

[run]
duration = 100

[noise]
variance = 0.04
seed = 1
"""

# Same line with no burst model and one fictitious leak at node 6, step 400.
CASE_A_LEAK6 = CASE_A.replace("name = paper-case-a", "name = paper-case-a-leak6").replace(
    "mode = deterministic", "mode = none\nforced = 6@400"
)

# Non-horizontal stagnant line ending in a closed pipe: five 20 m pipes,
# 60 m supply head.
CASE_B = """
[scenario]
name = paper-case-b

[fluid]
density = 1000
gravity = 9.811
bulk_modulus = 2.1994e9

[pipes]
length = 20
diameter = 0.5
friction_factor = 0.015
wall_thickness = 0.01905
youngs_modulus = 4.1e11
anchoring_coefficient = 1
yield_stress = 8e6

[nodes]
elevations = 20, 20, 30, 30, 0, 0
terminal = dead_end

[boundary]
upstream_head = 60
entrance_loss = 0.5

[burst]
mode = deterministic
threshold_fraction = 0.8
lambda = 0.001
seed = 0

[run]
duration = 20

[noise]
variance = 0.04
seed = 1
"""

# Variant of case B with 100 m pipes and a 40 m supply head.
CASE_B_TABLE3 = (
    CASE_B.replace("name = paper-case-b", "name = paper-case-b-table3")
    .replace("length = 20", "length = 100")
    .replace("upstream_head = 60", "upstream_head = 40")
)

PRESETS = {
    "paper-case-a": CASE_A,
    "paper-case-a-leak6": CASE_A_LEAK6,
    "paper-case-b": CASE_B,
    "paper-case-b-table3": CASE_B_TABLE3,
}


def preset(name: str) -> ScenarioConfig:
    try:
        text = PRESETS[name]
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return parse_scenario(text)
