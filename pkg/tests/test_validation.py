import json

import numpy as np
import pytest

from ruinopt import DomainError, Erlang, Exponential, ModelParams, ValueField, Weibull, build_grid
from ruinopt.validation import (
    all_passed,
    check_bounds_and_boundaries,
    check_continuity_modulus,
    check_dpp,
    check_hazard_positive,
    check_memoryless,
    check_monotonicity,
    check_w_inequality,
    crosscheck_mc,
    default_test_points,
    report_json,
    run_suite,
)


def _row(grid, i, k):
    return i * (i + 1) // 2 + k


def _faulty(V, i, j, k, value):
    vals = V.values.copy()
    vals[_row(V.grid, i, k), j] = value
    return ValueField(V.grid, vals)


def test_solution_passes_deterministic_checks(solved50, ref_params):
    V = solved50[0]
    for check in (check_bounds_and_boundaries, check_monotonicity, check_w_inequality, check_memoryless):
        rep = check(V, ref_params)
        assert rep.status == "pass", rep
        assert rep.location is None


def test_constant_one_field_passes(ref_params):
    g = build_grid(ref_params, 10, 10)
    ones = ValueField(g, np.ones((g.n_rows, g.n_x + 1)))
    assert check_bounds_and_boundaries(ones).passed
    assert check_monotonicity(ones).violation == 0.0
    assert check_w_inequality(ones, ref_params).passed


def test_value_above_one_is_located(solved50, ref_params):
    bad = _faulty(solved50[0], 10, 3, 2, 1.5)
    rep = check_bounds_and_boundaries(bad)
    assert rep.status == "fail"
    assert rep.violation == pytest.approx(0.5)
    assert rep.location["node"] == [10, 3, 2]


def test_terminal_slice_must_be_one(solved50):
    V = solved50[0]
    bad = _faulty(V, V.grid.n_s, 0, 7, 0.99)
    rep = check_bounds_and_boundaries(bad)
    assert rep.status == "fail"
    assert rep.violation == pytest.approx(0.01, rel=1e-12)
    assert rep.location["node"] == [V.grid.n_s, 0, 7]


def test_decrease_in_surplus_is_located(solved50, ref_params):
    V = solved50[0]
    bad = _faulty(V, 20, 4, 5, V[20, 5, 5] + 0.05)
    rep = check_monotonicity(bad, ref_params)
    assert rep.status == "fail"
    assert rep.details["violation_x"] == pytest.approx(0.05, rel=1e-9)
    assert rep.location["node"] == [20, 4, 5]


def test_decrease_in_time_is_located(solved50, ref_params):
    V = solved50[0]
    bad = _faulty(V, 30, 2, 1, V[31, 2, 1] + 0.05)
    rep = check_monotonicity(bad, ref_params)
    assert rep.status == "fail" and rep.details["axis"] in ("s", "x")
    assert rep.details["violation_s"] == pytest.approx(0.05, rel=1e-9)


def test_w_inequality_catches_lowered_node(solved50, ref_params):
    V = solved50[0]
    bad = _faulty(V, 12, 3, 4, 0.5 * V[12, 3, 4])
    rep = check_w_inequality(bad, ref_params)
    assert rep.status == "fail"
    assert rep.location["node"] == [12, 3, 4]


def test_memoryless_skipped_for_renewal_arrivals():
    P = ModelParams(1.5, 0.1, 5.0, Erlang(2, 2.0), Exponential(1.0))
    g = build_grid(P, 4, 4)
    rep = check_memoryless(ValueField(g, np.ones((g.n_rows, 5))), P)
    assert rep.status == "skipped" and rep.passed


def test_memoryless_catches_w_dependence(solved50, ref_params):
    V = solved50[0]
    bad = _faulty(V, 30, 2, 10, V[30, 2, 10] - 0.05)
    rep = check_memoryless(bad, ref_params)
    assert rep.status == "fail" and rep.violation == pytest.approx(0.05, rel=1e-9)


def test_hazard_positive(ref_params):
    assert check_hazard_positive(ref_params, 50).status == "pass"
    P = ModelParams(1.5, 0.1, 5.0, Weibull(2.0, 1.0), Exponential(1.0))
    rep = check_hazard_positive(P, 50)
    assert rep.status == "fail" and rep.location == {"w": 0.0}


def test_continuity_modulus(solved50, solved100):
    rep = check_continuity_modulus(solved50[0], solved100[0])
    assert rep.status == "pass"
    assert rep.details["fine"]["x"] < rep.details["coarse"]["x"]
    with pytest.raises(DomainError):
        check_continuity_modulus(solved100[0], solved50[0])


def test_default_points_are_interior(ref_params):
    pts = default_test_points(ref_params)
    assert len(pts) == 5
    for s, x, w in pts:
        assert 0.0 <= w <= s < ref_params.T
        assert 0.0 <= x < ref_params.eta_p * (ref_params.T - s)


def test_crosscheck_passes_for_solution(solved50, ref_params):
    V, Q, _ = solved50
    rep = crosscheck_mc(V, Q, ref_params, n_paths=50_000, seed=3, eps_grid=0.03)
    assert rep.status == "pass", rep.details["rows"]
    assert len(rep.details["rows"]) == 5 * 4


def test_crosscheck_catches_wrong_value(solved50, ref_params):
    V, Q, _ = solved50
    shifted = ValueField(V.grid, np.where(V.values < 1.0, 0.8 * V.values, 1.0))
    rep = crosscheck_mc(shifted, Q, ref_params, n_paths=20_000, seed=3, constants=())
    assert rep.status == "fail" and rep.location["policy"] == "table"


def test_crosscheck_above_barrier_is_trivial(solved50, ref_params):
    V, Q, _ = solved50
    rep = crosscheck_mc(V, Q, ref_params, points=[(0.0, 2.0, 0.0)], n_paths=1000, constants=(0.0,))
    assert rep.violation == 0.0
    assert all(r["mean"] == 1.0 for r in rep.details["rows"])


def test_dpp_zero_horizon_is_exact(solved50, ref_params):
    V, Q, _ = solved50
    rep = check_dpp(V, Q, ref_params, (0.0, 0.3, 0.0), 0.0, n_paths=10)
    assert rep.violation == 0.0 and rep.details["std_error"] == 0.0


def test_dpp_rejects_off_grid_horizon(solved50, ref_params):
    V, Q, _ = solved50
    with pytest.raises(DomainError):
        check_dpp(V, Q, ref_params, (0.0, 0.3, 0.0), 0.13, n_paths=10)
    with pytest.raises(DomainError):
        check_dpp(V, Q, ref_params, (4.9, 0.01, 0.0), 0.5, n_paths=10)


@pytest.mark.parametrize("h", [0.5, 1.0])
def test_dpp_holds_at_interior_point(solved50, ref_params, h):
    V, Q, _ = solved50
    rep = check_dpp(V, Q, ref_params, (0.0, 0.3, 0.0), h, n_paths=50_000, seed=9)
    assert rep.status == "pass", rep


def test_suite_and_json_are_deterministic(solved50, ref_params):
    V, Q, _ = solved50
    kw = dict(dpp_point=(1.0, 0.2, 0.5), dpp_h=(0.5,), n_paths=5_000, seed=1, eps_grid=0.03)
    a = run_suite(V, Q, ref_params, **kw)
    b = run_suite(V, Q, ref_params, **kw)
    assert [r.name for r in a] == sorted(r.name for r in a)
    assert report_json(a) == report_json(b)
    assert all_passed(a)
    assert {d["name"] for d in json.loads(report_json(a))} >= {"crosscheck_mc", "dpp(h=0.5)", "monotonicity"}
