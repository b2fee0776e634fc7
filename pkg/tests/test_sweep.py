import logging

import pytest

from trustnet.config import build_config
from trustnet.sweep import (
    GridError,
    best_rows,
    grid_points,
    parse_grid,
    point_overrides,
    run_scale_sweep,
    run_sensitivity_sweep,
    scale_config,
)


def test_range_cardinality():
    assert len(parse_grid("gamma=0.1:0.9:0.1")["gamma"]) == 9
    assert len(parse_grid("gamma=0.10:0.90:0.05")["gamma"]) == 17


def test_value_lists_and_terms():
    grid = parse_grid("omega=0.2,0.4; t_thresh=0.3:0.5:0.1")
    assert grid == {"omega": [0.2, 0.4], "t_thresh": [0.3, 0.4, 0.5]}


@pytest.mark.parametrize("spec", ["", "gamma", "zeta=1", "gamma=0.9:0.1:0.1", "gamma=a,b", "gamma=0:1:0"])
def test_bad_grids(spec):
    with pytest.raises(GridError):
        parse_grid(spec)


def test_gamma_implies_epsilon():
    points = grid_points({"gamma": [0.25]})
    assert points == [{"gamma": 0.25, "epsilon": 0.75}]
    assert point_overrides(points[0]) == ["weights.gamma=0.25", "weights.epsilon=0.75"]


def test_simplex_filter_warns(caplog):
    axis = [0.2, 0.35, 0.45]
    with caplog.at_level(logging.WARNING, logger="trustnet.sweep"):
        points = grid_points({"delta": axis, "theta": axis, "mu": axis})
    assert {(p["delta"], p["theta"], p["mu"]) for p in points} == {(0.45, 0.35, 0.2), (0.45, 0.2, 0.35),
                                                                    (0.35, 0.45, 0.2), (0.35, 0.2, 0.45),
                                                                    (0.2, 0.45, 0.35), (0.2, 0.35, 0.45)}
    assert "skipped 21 grid points" in caplog.text


def test_full_simplex_size():
    axis = parse_grid("delta=0.05:0.9:0.05")["delta"]
    points = grid_points({"delta": axis, "theta": axis, "mu": axis})
    # compositions of 20 steps into three positive parts
    assert len(points) == 171


def test_scale_config_bounds():
    base = build_config({})
    assert len(scale_config(base, 50).fleet) == 5
    assert sum(scale_config(base, 50).fleet.values()) == 50
    for bad in (1, 10_001):
        with pytest.raises(GridError):
            scale_config(base, bad)


def test_scale_singleton_matches_direct_run():
    from trustnet.metrics import build_report
    from trustnet.sim import Simulation

    base = build_config({"duration": 300, "attacks": [{"kind": "syn_flood", "attacker": "plug1", "start": 100, "duration": 100}]})
    (point,) = run_scale_sweep(base, [8])
    direct = build_report(Simulation(scale_config(base, 8)).run())
    assert point.report == direct
    assert point.stats.events > 0


def test_sensitivity_rows_keep_reports():
    base = build_config({"duration": 300, "attacks": [{"kind": "udp_flood", "attacker": "plug2", "start": 100, "duration": 100}]})
    rows = run_sensitivity_sweep([base, build_config({**{"seed": 2}, "duration": 300})], "gamma=0.35,0.9")
    assert [r.params["gamma"] for r in rows] == [0.35, 0.9]
    assert all(len(r.reports) == 2 for r in rows)
    assert best_rows(rows, "accuracy")[0].params["gamma"] == 0.35
    with pytest.raises(ValueError):
        best_rows(rows, "latency")
