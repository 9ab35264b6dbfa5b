import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import bisect

from pipeburst.hydraulics import steady_state
from pipeburst.moc import (
    CharacteristicCoefficients,
    DomainError,
    FixedOpening,
    ReverseFlowUnsupportedError,
    TimeGrid,
    ValveSchedule,
    characteristic_coefficients,
    cp_coefficient,
    cn_coefficient,
    dead_end_update,
    discharge_coefficient,
    interior_update,
    leak_node_update,
    step,
    upstream_reservoir_update,
    valve_boundary_update,
    valve_coefficient,
)
from pipeburst.scenario import preset


def test_cp_cn_frictionless():
    assert cp_coefficient(1.0, 10.0, 1.0, 0.0) == 11.0
    assert cn_coefficient(1.0, 10.0, 1.0, 0.0) == -9.0


def test_cp_term_by_term(net_a, dt_a, consts_a):
    pipe = net_a.pipes[0]
    ca = 9.8 * pipe.area / net_a.wave_speeds()[0]
    r = pipe.friction_factor * dt_a / (2 * pipe.diameter * pipe.area)
    assert consts_a.ca[0] == pytest.approx(ca, rel=1e-14)
    assert consts_a.friction[0] == pytest.approx(r, rel=1e-14)
    expected = 0.596 + ca * 40.0 - r * 0.596 * 0.596
    assert cp_coefficient(0.596, 40.0, consts_a.ca[0], consts_a.friction[0]) == pytest.approx(expected, rel=1e-14)


def test_characteristic_coefficients_use_pipe_end_flows(net_a, dt_a, steady_a, consts_a):
    s = steady_a.copy()
    s.flow_up[2], s.flow_down[3] = 0.4, 0.7
    c = characteristic_coefficients(s, 3, net_a, dt_a)
    ca, r = consts_a.ca[2], consts_a.friction[2]
    assert c.cp == pytest.approx(0.4 + ca * s.head[2] - r * 0.4 * 0.4)
    assert c.cn == pytest.approx(0.7 - ca * s.head[4] - r * 0.7 * 0.7)
    assert math.isnan(characteristic_coefficients(s, 0, net_a, dt_a).cp)


@pytest.mark.parametrize("cp,cn,ca,q,h", [(11, -9, 1, 1, 10), (3, 3, 1, 3, 0), (2, 0, 0.5, 1, 2)])
def test_interior_update(cp, cn, ca, q, h):
    assert interior_update(CharacteristicCoefficients(cp, cn, ca)) == pytest.approx((q, h))


def test_reservoir_examples():
    ca, hr = 1.4e-3, 40.0
    assert upstream_reservoir_update(-ca * hr, ca, hr, 0.5, 0.196, 9.8) == pytest.approx((0.0, hr))
    q, h = upstream_reservoir_update(0.1, ca, hr, -1.0, 0.196, 9.8)
    assert q == pytest.approx(0.1 + ca * hr, rel=1e-15) and h == hr


def test_reservoir_reproduces_steady_flow(net_a, steady_a, consts_a):
    cn = cn_coefficient(steady_a.flow_down[0], steady_a.head[1], consts_a.ca[0], consts_a.friction[0])
    q, h = upstream_reservoir_update(cn, consts_a.ca[0], 40.0, 0.5, consts_a.area[0], 9.8)
    assert q == pytest.approx(steady_a.flow_up[0], abs=1e-12)
    assert h == pytest.approx(steady_a.head[0], abs=1e-9)


def test_discharge_coefficient():
    assert discharge_coefficient(0.0) == 0.05959
    assert discharge_coefficient(0.5) == pytest.approx(0.05959 + 0.0312 * 0.5**2.1 - 0.184 * 0.5**6)
    assert discharge_coefficient(0.5) == pytest.approx(0.06400, abs=5e-5)
    assert discharge_coefficient(1.0) == pytest.approx(-0.09321, abs=1e-12)
    with pytest.raises(DomainError):
        discharge_coefficient(1.5)


def test_valve_closed_and_open(steady_a, consts_a):
    ca = consts_a.ca[-1]
    cp = cp_coefficient(steady_a.flow_up[-1], steady_a.head[-2], ca, consts_a.friction[-1])
    assert valve_boundary_update(cp, ca, 0.0, steady_a.flow_down[-1], steady_a.head[-1], 30.0) == (0.0, cp / ca)
    q, h = valve_boundary_update(cp, ca, 1.0, steady_a.flow_down[-1], steady_a.head[-1], 30.0)
    assert q == pytest.approx(steady_a.flow_down[-1], abs=1e-12)
    assert h == pytest.approx(steady_a.head[-1], abs=1e-9)


def test_valve_half_open_matches_polynomial_root(steady_a, consts_a):
    ca = consts_a.ca[-1]
    cp = cp_coefficient(steady_a.flow_up[-1], steady_a.head[-2], ca, consts_a.friction[-1])
    q, _ = valve_boundary_update(cp, ca, 0.5, steady_a.flow_down[-1], steady_a.head[-1], 30.0)
    cv = valve_coefficient(0.5, steady_a.flow_down[-1], ca, steady_a.head[-1], 30.0)
    roots = np.roots([1.0, cv, cv * (ca * 30.0 - cp)])
    assert q == pytest.approx(roots[roots > 0].max(), rel=1e-12)


def test_valve_reverse_flow_raises(consts_a):
    ca = consts_a.ca[-1]
    with pytest.raises(ReverseFlowUnsupportedError):
        valve_boundary_update(ca * 10.0, ca, 0.5, 0.58, 31.2, 30.0)
    with pytest.raises(DomainError):
        valve_boundary_update(ca * 40.0, ca, 1.2, 0.58, 31.2, 30.0)


def test_dead_end_examples():
    ca = 1.4e-3
    assert dead_end_update(40 * ca, ca) == (0.0, pytest.approx(40.0))
    assert dead_end_update(0.0, ca) == (0.0, 0.0)


def test_leak_node_zero_lambda_equals_interior():
    assert leak_node_update(2.0, 0.0, 0.5, 0.0, 0.0) == (1.0, 1.0, 2.0, 0.0)
    c = CharacteristicCoefficients(0.7, -0.3, 1.3e-3)
    q, h = interior_update(c)
    assert leak_node_update(c.cp, c.cn, c.ca, 0.0, 12.0) == (q, q, h, 0.0)


def test_leak_node_negative_drive_keeps_continuity():
    qi, qo, h, leak = leak_node_update(0.01, 0.0, 1e-3, 0.001, 20.0)
    assert leak == 0.0 and h < 20.0 and qi - qo == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(
    ca=st.floats(5e-4, 5e-3),
    lam=st.floats(1e-4, 1e-2),
    z=st.floats(0.0, 30.0),
    gauge=st.floats(0.1, 150.0),
    cn=st.floats(-1.0, 1.0),
)
def test_leak_node_matches_bisection(ca, lam, z, gauge, cn):
    cp = cn + 2 * ca * (z + gauge) + lam * math.sqrt(gauge)
    qi, qo, h, leak = leak_node_update(cp, cn, ca, lam, z)
    fn = lambda x: 2 * ca * x + lam * math.sqrt(max(x - z, 0.0)) - (cp - cn)
    ref = bisect(fn, z, z + (cp - cn) / (2 * ca), xtol=1e-14, maxiter=500)
    assert abs(h - ref) < 1e-10
    assert abs(qi - qo - leak) < 1e-12
    assert leak == pytest.approx(lam * math.sqrt(h - z), rel=1e-9)


def test_leak_rate_near_forty_metres(consts_a):
    ca = consts_a.ca[0]
    cn = 0.3
    cp = cn + 2 * ca * 40.0 + 0.001 * math.sqrt(40.0)
    *_, leak = leak_node_update(cp, cn, ca, 0.001, 0.0)
    assert leak == pytest.approx(0.0063, abs=5e-5)


def test_valve_schedule():
    sched = ValveSchedule(20.0)
    assert sched(0.0) == 1.0 and sched(20.0) == 0.0 and sched(30.0) == 0.0
    assert sched(5.0) == pytest.approx(0.75)
    power = ValveSchedule(20.0, lambda s: (1 - s) ** 1.5)
    assert power(10.0) == pytest.approx(0.5**1.5)
    assert ValveSchedule(0.0)(0.0) == 1.0 and ValveSchedule(0.0)(1e-9) == 0.0
    assert FixedOpening(0.4)(123.0) == 0.4


def test_time_grid_requires_equal_travel_times(net_a):
    grid = TimeGrid.for_network(net_a, 10)
    assert grid.dt == pytest.approx(100.0 / 1388.506, rel=1e-6)
    assert len(grid.times()) == 11
    pipes = list(net_a.pipes)
    pipes[2] = replace(pipes[2], length=150.0)
    with pytest.raises(DomainError):
        TimeGrid.for_network(replace(net_a, pipes=tuple(pipes)), 10)


def test_step_stationary(net_a, dt_a, steady_a):
    s1 = step(steady_a, net_a, FixedOpening(1.0), None, dt_a, steady=steady_a)
    assert np.max(np.abs(s1.head - steady_a.head)) < 1e-6
    assert np.max(np.abs(s1.flow_up - steady_a.flow_up)) < 1e-9
    assert np.max(np.abs(s1.flow_down - steady_a.flow_down)) < 1e-9
    assert s1.time == pytest.approx(dt_a)


def test_step_hydrostatic_dead_end():
    cfg = preset("paper-case-b")
    s0 = steady_state(cfg.network)
    dt = cfg.time_grid().dt
    s1 = step(s0, cfg.network, ValveSchedule(0.0), None, dt)
    assert np.allclose(s1.head, s0.head, rtol=0, atol=1e-12) and np.all(s1.flow_down == 0.0)


def test_forced_burst_wave_travels_one_reach_per_step():
    cfg = preset("paper-case-b")
    net = cfg.network
    s = steady_state(net)
    dt = cfg.time_grid().dt
    bursts = {2: 0.001}
    dev = []
    for _ in range(3):
        s = step(s, net, ValveSchedule(0.0), bursts, dt)
        dev.append(np.abs(s.head - 60.0) > 1e-12)
    assert dev[0].tolist() == [False, False, True, False, False, False]
    assert dev[1][1] and dev[1][3] and not dev[1][0] and not dev[1][4]


def test_no_burst_peak_near_valve(quiet_run):
    # closure transient rises well above the static 30 m level
    assert 55.0 <= quiet_run.head[:, 5].max() <= 70.0
    assert quiet_run.head[:, -1].max() > quiet_run.head[:, 5].max()


def test_joukowsky_frictionless_instant_closure(case_a):
    pipes = tuple(replace(p, friction_factor=0.0) for p in case_a.network.pipes)
    net = replace(case_a.network, pipes=pipes)
    s0 = steady_state(net)
    dt = case_a.time_grid().dt
    s1 = step(s0, net, ValveSchedule(0.0), None, dt, steady=s0)
    rise = s1.head[-1] - s0.head[-1]
    expected = net.wave_speeds()[0] * s0.flow_down[-1] / (net.pipes[-1].area * 9.8)
    assert rise == pytest.approx(expected, rel=0.005)


def test_characteristic_relations_hold_every_step(det_run, net_a, consts_a):
    ca, r = consts_a.ca, consts_a.friction
    H, qu, qd = det_run.head, det_run.flow_up, det_run.flow_down
    worst = 0.0
    for k in range(1, len(H)):
        for j in range(1, net_a.n_nodes):
            cp = qu[k - 1, j - 1] + ca[j - 1] * H[k - 1, j - 1] - r[j - 1] * qu[k - 1, j - 1] * abs(qu[k - 1, j - 1])
            worst = max(worst, abs(qd[k, j - 1] - (cp - ca[j - 1] * H[k, j])))
        for j in range(0, net_a.n_nodes - 1):
            cn = qd[k - 1, j] - ca[j] * H[k - 1, j + 1] - r[j] * qd[k - 1, j] * abs(qd[k - 1, j])
            worst = max(worst, abs(qu[k, j] - (cn + ca[j] * H[k, j])))
    assert worst < 1e-9


def test_closed_valve_equals_dead_end(consts_a):
    ca = consts_a.ca[-1]
    for cp in (0.0, 0.03, 0.5):
        assert valve_boundary_update(cp, ca, 0.0, 0.58, 31.2, 30.0) == dead_end_update(cp, ca)
