"""Acceptance criteria, one test each; run with ``-s`` to see the summary lines."""

import pytest

from pipeburst import validation as v


@pytest.fixture(scope="module")
def det(det_run):
    return det_run


def report(result):
    print("\n" + result.line())
    return result


def test_c1_wave_speed():
    r = report(v.check_wave_speed())
    assert abs(r.values["a"] - 1388.5) <= 0.1


def test_c2_no_burst_transient(quiet_run):
    r = report(v.check_no_burst_transient(quiet_run))
    assert 55.0 <= r.values["peak"] <= 70.0
    assert abs(r.values["t_peak"] - 20.0) <= 2.0
    assert abs(r.values["tail_mean"] - 40.0) <= 3.0


def test_c3_burst_localization(det):
    r = report(v.check_burst_localization(det))
    assert r.values["nodes"] == [4, 5, 6]
    for t in r.values["times"].values():
        assert abs(t - 20.0) <= 2.0


def test_c4_leak_asymptote(det):
    r = report(v.check_leak_asymptote(det))
    assert r.values["leak"]
    for q in r.values["leak"].values():
        assert abs(q - 0.0063) <= 0.05 * 0.0063


def test_c5_ekf_leak_estimation(det):
    r = report(v.check_ekf(det, seeds=(1, 2, 3, 4, 5), variance=0.04))
    est, truth = r.values["estimates"], r.values["truth"]
    for node in (4, 5, 6):
        assert abs(est[node] - truth[node]) <= 0.05 * truth[node]
    for node in (2, 3):
        assert est[node] < 0.15 * 0.0063


def test_c6_oracle_equivalence():
    r = report(v.check_oracles(1000))
    assert r.values["leak"] < 1e-10
    assert r.values["valve"] < 1e-9 and r.values["reservoir"] < 1e-9


def test_c7a_stationarity():
    r = report(v.check_stationarity())
    assert r.values["dh"] < 1e-6 and r.values["dq"] < 1e-9


def test_c7b_dead_end_flow():
    r = report(v.check_dead_end())
    assert r.values["terminal"] == 0.0 and r.values["all"] == 0.0


def test_c7c_leak_continuity(det):
    r = report(v.check_leak_continuity(det))
    assert r.values["residual"] < 1e-12


def test_c7d_joukowsky():
    r = report(v.check_joukowsky())
    assert abs(r.values["rise"] - r.values["expected"]) <= 0.005 * r.values["expected"]


def test_c7e_probabilistic_p1_equals_deterministic():
    assert report(v.check_p1_equivalence()).passed


def test_c7f_full_run_determinism():
    assert report(v.check_determinism()).passed


def test_c8_jacobian():
    r = report(v.check_jacobian())
    assert r.values["deviation"] < 1e-4
