import numpy as np
import pytest

from pipeburst.runner import (
    add_measurement_noise,
    read_manifest,
    read_measurements,
    read_timeseries,
    simulate,
    simulate_measurements,
    timeseries_columns,
    write_measurements,
    write_run,
    write_timeseries,
)
from pipeburst.scenario import CASE_A, ScenarioError, dump_scenario, load_scenario, parse_scenario, preset


def test_preset_case_a_values(case_a):
    net = case_a.network
    assert (net.fluid.density, net.fluid.gravity, net.fluid.bulk_modulus) == (1000.0, 9.8, 2.1994e9)
    p = net.pipes[0]
    assert (p.length, p.diameter, p.wall_thickness, p.friction_factor, p.youngs_modulus) == (
        100.0, 0.5, 0.01905, 0.015, 4.1e11)
    assert net.n_nodes == 7 and net.has_valve
    assert (net.upstream_head, net.downstream_head, net.yield_stress) == (40.0, 30.0, 8e6)
    assert case_a.closure_time == 20.0
    assert case_a.burst.default_lambda == 0.001 and case_a.burst.threshold_fraction == 0.8


def test_preset_case_b_and_table_variant():
    b = preset("paper-case-b")
    assert b.network.n_pipes == 5 and all(p.length == 20.0 for p in b.network.pipes)
    assert b.network.upstream_head == 60.0 and not b.network.has_valve
    assert b.network.elevations.tolist() == [20, 20, 30, 30, 0, 0]
    assert b.network.fluid.gravity == 9.811
    t3 = preset("paper-case-b-table3")
    assert t3.network.pipes[0].length == 100.0 and t3.network.upstream_head == 40.0


def test_leak6_preset_forces_node_6_at_step_400():
    cfg = preset("paper-case-a-leak6")
    assert cfg.forced_bursts == ((5, 400),)
    assert cfg.burst.mode.value == "none"


def test_pipe_count_mismatch_names_field():
    text = CASE_A.replace("[pipes]", "[pipes]\ncount = 5")
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.field == "pipes.count"


def test_unknown_key_and_section_rejected():
    with pytest.raises(ScenarioError, match="fluid.viscosity"):
        parse_scenario(CASE_A.replace("[fluid]", "[fluid]\nviscosity = 1e-6"))
    with pytest.raises(ScenarioError, match=r"\[extras\]"):
        parse_scenario(CASE_A + "\n[extras]\nx = 1\n")


def test_syntax_error_reports_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("[fluid]\ndensity = 1000\nthis line is broken\n")
    assert err.value.line == 3


@pytest.mark.parametrize("old,new,field", [
    ("density = 1000", "density = -5", "fluid"),
    ("diameter = 0.5", "diameter = abc", "pipes.diameter"),
    ("closure_time = 20", "closure_time = -1", "valve.closure_time"),
    ("mode = deterministic", "mode = maybe", "burst"),
    ("downstream_head = 30\n", "", "boundary.downstream_head"),
    ("elevations = 0, 0, 0, 0, 0, 0, 0", "elevations = 0, 0", "nodes.elevations"),
])
def test_semantic_errors_name_field(old, new, field):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(CASE_A.replace(old, new))
    assert err.value.field == field


def test_dump_parse_roundtrip():
    for name in ("paper-case-a", "paper-case-a-leak6", "paper-case-b"):
        cfg = preset(name)
        again = parse_scenario(dump_scenario(cfg))
        assert again == cfg


def test_load_scenario_file(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text(CASE_A.replace("duration = 100", "steps = 12"))
    cfg = load_scenario(str(path))
    assert cfg.time_grid().steps == 12
    with pytest.raises(ScenarioError):
        load_scenario(str(tmp_path / "missing.ini"))


def test_measurements_variance_and_seed(quiet_run):
    assert np.array_equal(simulate_measurements(quiet_run, 0.0, 3), quiet_run.head[:, [0, -1]])
    clean = np.zeros((5000, 2))
    eps = add_measurement_noise(clean, 0.04, 9)
    assert 0.036 <= eps.var() <= 0.044
    assert np.array_equal(eps, add_measurement_noise(clean, 0.04, 9))
    assert not np.array_equal(eps, add_measurement_noise(clean, 0.04, 10))


def test_timeseries_three_steps_roundtrip(case_a, tmp_path):
    run = simulate(case_a.with_overrides(steps=3))
    path = tmp_path / "ts.csv"
    write_timeseries(run, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 5
    assert len(lines[0].split(",")) == 25 == len(timeseries_columns(7))
    back = read_timeseries(path)
    assert np.array_equal(back.head, run.head)
    assert np.array_equal(back.flow_up, run.flow_up) and np.array_equal(back.flow_down, run.flow_down)
    assert np.array_equal(back.leak, run.leak) and np.array_equal(back.times, run.times)


def test_measurement_file_roundtrip(quiet_run, tmp_path):
    z = simulate_measurements(quiet_run, 0.04, 2)
    write_measurements(quiet_run.times, z, tmp_path / "m.csv")
    t, back = read_measurements(tmp_path / "m.csv")
    assert np.array_equal(back, z) and np.array_equal(t, quiet_run.times)


def test_row_count_and_peak(quiet_run):
    assert len(quiet_run.head) == quiet_run.steps + 1 == 1390
    assert quiet_run.head[:, 5].max() == pytest.approx(60.0, abs=5.0)


def test_forced_leak_run():
    run = simulate(preset("paper-case-a-leak6").with_overrides(steps=420))
    assert run.registry.burst_step == {5: 400}
    assert np.all(run.leak[:401, 5] == 0.0) and run.leak[401, 5] > 0.0


def test_manifest_reproduces_run(case_a, tmp_path):
    cfg = case_a.with_overrides(mode="probabilistic", seed=5, steps=400)
    paths = write_run(simulate(cfg), tmp_path / "a")
    meta = read_manifest(paths["manifest"])
    assert meta["burst_seed"] == "5" and meta["steps"] == "400"
    assert float(meta["wave_speed"]) == pytest.approx(1388.5, abs=0.1)
    again = load_scenario(str(paths["manifest"]))
    assert again.digest() == meta["config_sha256"]
    paths2 = write_run(simulate(again), tmp_path / "b")
    for key in ("timeseries", "events"):
        assert paths[key].read_bytes() == paths2[key].read_bytes()


def test_compare_matches_independent_value(det_run, tmp_path, capsys):
    from pipeburst.cli import main
    from pipeburst.runner import estimate, write_estimates

    paths = write_run(det_run, tmp_path)
    est = estimate(det_run.config, simulate_measurements(det_run, 0.04, 1))
    write_estimates(est, tmp_path / "est.csv")
    assert main(["compare", str(paths["timeseries"]), str(tmp_path / "est.csv")]) == 0
    reported = float(capsys.readouterr().out.split("max abs error")[1].split()[0])
    n = len(det_run.times)
    tail = slice(n - round(n / 4), n)
    own = np.max(np.abs(est.leak[tail].mean(0) - det_run.leak[tail, 1:-1].mean(0)))
    assert reported == pytest.approx(own, abs=1e-6)
