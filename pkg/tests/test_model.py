import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruinopt import (
    ConstantPolicy,
    ConstantRate,
    DomainError,
    Exponential,
    ModelParams,
    State,
    TablePolicy,
    barrier,
    evaluate_policy,
    in_domain,
)


def params(p=1.5, eta=0.1, T=5.0):
    return ModelParams(p, eta, T, ConstantRate(1.0), Exponential(1.0))


@pytest.mark.parametrize("field,value", [("p", 0.0), ("eta", 0.0), ("T", -1.0), ("eta", float("nan"))])
def test_params_reject_nonpositive(field, value):
    kw = {"p": 1.0, "eta": 0.5, "T": 1.0, field: value}
    with pytest.raises(DomainError, match=f"{field} must be > 0"):
        params(**kw)


def test_barrier_examples():
    assert barrier(params(1.0, 0.5, 10.0), 0.0) == 5.0
    assert barrier(params(), 5.0) == 0.0
    assert barrier(params(2.0, 0.3, 1.0), 0.5) == pytest.approx(0.3, rel=1e-15)


def test_barrier_outside_horizon():
    with pytest.raises(DomainError):
        barrier(params(), 5.5)
    with pytest.raises(DomainError):
        barrier(params(), -0.1)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_barrier_is_affine_decreasing(s1, s2):
    P = params()
    lo, hi = sorted((s1, s2))
    assert barrier(P, lo) >= barrier(P, hi)
    assert barrier(P, lo) - barrier(P, hi) == pytest.approx(P.eta_p * (hi - lo), abs=1e-12)


def test_in_domain_examples():
    P = params()
    assert in_domain(P, State(0.0, 0.0, 0.0))
    assert not in_domain(P, State(0.0, barrier(P, 0.0) + 0.01, 0.0))
    assert not in_domain(P, State(1.0, 0.1, 1.5))


def test_constant_policy():
    assert evaluate_policy(ConstantPolicy(0.4), State(3.0, 100.0, 1.0)) == 0.4
    with pytest.raises(DomainError):
        ConstantPolicy(1.2)


def test_uniform_table_policy():
    P = params()
    pol = TablePolicy.uniform(1.0, P, 8, 6)
    for st_ in (State(0.0, 0.0, 0.0), State(2.3, 0.2, 1.1), State(5.0, 0.0, 5.0)):
        assert evaluate_policy(pol, st_) == 1.0


def test_table_at_clamp_target_matches_grid(solved50, ref_params):
    _, Q, _ = solved50
    pol = TablePolicy.from_field(Q)
    g = Q.grid
    for i in (0, 10, 25, 49):
        s = i * g.ds
        j = g.barrier_index(i)
        k = i // 2
        # above the barrier the table cedes everything, as the barrier node does
        above = State(s, barrier(ref_params, s) + 0.3, k * g.ds)
        assert evaluate_policy(pol, above) == Q[i, j, k] == 0.0
        assert evaluate_policy(pol, State(s, -1.0, k * g.ds)) == Q[i, 0, k]
        assert evaluate_policy(pol, State(s, 0.0, s + 2.0)) == Q[i, 0, i]


def test_table_interpolates_between_nodes():
    P = params()
    n_s, n_x = 4, 4
    pol = TablePolicy.uniform(0.0, P, n_s, n_x)
    vals = pol.values.copy()
    vals[:, 1] = 1.0  # q = 1 on x node 1 of every row
    pol = TablePolicy(vals, n_s, n_x, P.T, P.eta_p)
    dx = pol.dx
    assert evaluate_policy(pol, State(0.0, 0.5 * dx, 0.0)) == pytest.approx(0.5)
    assert evaluate_policy(pol, State(0.0, 1.25 * dx, 0.0)) == pytest.approx(0.75)


def test_table_shape_checked():
    with pytest.raises(DomainError):
        TablePolicy(np.zeros((3, 3)), 4, 2, 5.0, 0.15)


@given(
    s=st.floats(-2.0, 8.0),
    x=st.floats(-5.0, 5.0),
    w=st.floats(-2.0, 8.0),
)
def test_table_policy_always_in_unit_interval(s, x, w):
    P = params()
    rng = np.random.default_rng(abs(hash((s, x, w))) % 2**32)
    n_rows = 6 * 7 // 2
    pol = TablePolicy(rng.uniform(0.0, 1.0, (n_rows, 6)), 5, 5, P.T, P.eta_p)
    assert 0.0 <= evaluate_policy(pol, State(s, x, w)) <= 1.0
