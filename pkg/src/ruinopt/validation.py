"""Property checks on solved fields and solver/simulator cross-checks.

Every check returns a :class:`CheckReport` whose status is ``fail`` exactly
when the worst violation exceeds the tolerance.  Node-based checks locate the
worst node as ``(i, j, k)`` together with its state ``(s, x, w)``; Monte Carlo
checks locate the worst test state.  Nothing here depends on wall time or on
the number of workers, so a serialised report is byte-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from ._interp import clamp_state, interp_field
from .distributions import ConstantRate, hazard, hazard_increment
from .errors import DomainError
from .hjb import Grid, PolicyField, ValueField, interpolate_value
from .model import ConstantPolicy, ModelParams, State, TablePolicy, barrier
from .simulator import estimate_survival, stopped_states

__all__ = [
    "CheckReport",
    "EPS_GRID",
    "check_bounds_and_boundaries",
    "check_monotonicity",
    "check_w_inequality",
    "check_memoryless",
    "check_hazard_positive",
    "check_continuity_modulus",
    "crosscheck_mc",
    "check_dpp",
    "default_test_points",
    "run_suite",
    "report_json",
    "all_passed",
]

EPS_GRID = 2e-2
MONOTONE_TOL = 1e-10
MEMORYLESS_TOL = 1e-2
MODULUS_FACTOR = 0.7
HAZARD_FLOOR = 1e-10

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass(frozen=True)
class CheckReport:
    name: str
    status: str
    violation: float
    location: dict | None
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict:
        return asdict(self)


def _verdict(name, violation, location, tolerance, **details) -> CheckReport:
    violation = float(violation)
    bad = math.isnan(violation) or violation > tolerance
    return CheckReport(name, FAIL if bad else PASS, violation, location, float(tolerance), details)


def _skipped(name, tolerance, reason) -> CheckReport:
    return CheckReport(name, SKIPPED, 0.0, None, float(tolerance), {"reason": reason})


def _row_index(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Time and elapsed index of every packed row."""
    i = np.repeat(np.arange(grid.n_s + 1), np.arange(1, grid.n_s + 2))
    k = np.arange(grid.n_rows) - i * (i + 1) // 2
    return i, k


def _tri(i):
    return i * (i + 1) // 2


@njit(cache=True)
def _stopped_values(vals, n_s, n_x, T, eta_p, s, ruined, xs, ws):
    out = np.empty(xs.size)
    ds = T / n_s
    dx = eta_p * T / n_x
    for n in range(xs.size):
        if ruined[n] or xs[n] < 0.0:
            out[n] = 0.0
            continue
        s_c, x_c, w_c, bar = clamp_state(T, eta_p, s, xs[n], ws[n])
        out[n] = 1.0 if x_c >= bar else interp_field(vals, n_s, n_x, ds, dx, s_c, x_c, w_c)
    return out


def _node(grid: Grid, i: int, j: int, k: int) -> dict:
    return {
        "node": [int(i), int(j), int(k)],
        "state": [float(i * grid.ds), float(j * grid.dx), float(k * grid.ds)],
    }


def _worst(grid: Grid, excess: np.ndarray, rows: np.ndarray, row_i, row_k):
    """Largest entry of ``excess`` (NaN counts as worst) and its node."""
    if excess.size == 0:
        return 0.0, None
    flat = np.where(np.isnan(excess), np.inf, excess)
    r, j = np.unravel_index(int(np.argmax(flat)), flat.shape)
    row = rows[r]
    value = float(excess[r, j])
    if not value > 0.0 and not math.isnan(value):
        return value, None
    return value, _node(grid, row_i[row], j, row_k[row])


def check_bounds_and_boundaries(V: ValueField, params: ModelParams | None = None) -> CheckReport:
    """``0 <= V <= 1`` everywhere, ``V = 1`` on the terminal slice and on barrier nodes (exact)."""
    grid = V.grid
    vals = V.values
    row_i, row_k = _row_index(grid)
    excess = np.maximum(vals - 1.0, -vals)
    pinned = np.zeros_like(vals, dtype=bool)
    pinned[grid.rows(grid.n_s)] = True
    bar_j = np.array([grid.barrier_index(i) for i in range(grid.n_s + 1)])
    pinned |= np.arange(grid.n_x + 1)[None, :] >= bar_j[row_i][:, None]
    excess = np.where(pinned, np.abs(vals - 1.0), excess)
    violation, loc = _worst(grid, excess, np.arange(grid.n_rows), row_i, row_k)
    return _verdict("bounds_and_boundaries", max(violation, 0.0), loc, 0.0)


def check_monotonicity(V: ValueField, params: ModelParams | None = None, tol: float = MONOTONE_TOL) -> CheckReport:
    """Nondecreasing in ``s`` at fixed ``(x, w)`` and in ``x`` within every slice."""
    grid = V.grid
    vals = V.values
    row_i, row_k = _row_index(grid)
    inner = np.flatnonzero(row_i < grid.n_s)
    later = _tri(row_i[inner] + 1) + row_k[inner]
    v_s, loc_s = _worst(grid, vals[inner] - vals[later], inner, row_i, row_k)
    v_x, loc_x = _worst(grid, vals[:, :-1] - vals[:, 1:], np.arange(grid.n_rows), row_i, row_k)
    if v_s >= v_x:
        violation, loc, axis = v_s, loc_s, "s"
    else:
        violation, loc, axis = v_x, loc_x, "x"
    return _verdict(
        "monotonicity", max(violation, 0.0), loc, tol,
        axis=axis, violation_s=max(v_s, 0.0), violation_x=max(v_x, 0.0),
    )


def check_w_inequality(V: ValueField, params: ModelParams, tol: float = MONOTONE_TOL) -> CheckReport:
    """``V(s, x, w) >= exp(-(L(w + ds) - L(w))) V(s + ds, x, w + ds)`` at every node."""
    grid = V.grid
    vals = V.values
    row_i, row_k = _row_index(grid)
    inner = np.flatnonzero(row_i < grid.n_s)
    later = _tri(row_i[inner] + 1) + row_k[inner] + 1
    decay = np.exp(-np.asarray(hazard_increment(params.hazard, row_k[inner] * grid.ds, grid.ds)))
    excess = decay[:, None] * vals[later] - vals[inner]
    violation, loc = _worst(grid, excess, inner, row_i, row_k)
    return _verdict("w_inequality", max(violation, 0.0), loc, tol)


def _w_spread(V: ValueField) -> tuple[float, dict | None]:
    grid = V.grid
    worst, loc = 0.0, None
    for i in range(1, grid.n_s + 1):
        sl = V.slice(i)
        spread = sl.max(axis=1) - sl.min(axis=1)
        j = int(np.argmax(spread))
        if spread[j] > worst:
            worst = float(spread[j])
            loc = _node(grid, i, j, int(np.argmax(np.abs(sl[j] - sl[j, 0]))))
    return worst, loc


def check_memoryless(V: ValueField, params: ModelParams, tol: float = MEMORYLESS_TOL) -> CheckReport:
    """Largest spread of ``V`` across the elapsed-time axis; only meaningful for a constant rate."""
    if not isinstance(params.hazard, ConstantRate):
        return _skipped("memoryless", tol, f"hazard {type(params.hazard).__name__} is not a constant rate")
    spread, loc = _w_spread(V)
    return _verdict("memoryless", spread, loc, tol)


def check_hazard_positive(params: ModelParams, n_s: int, floor: float = HAZARD_FLOOR) -> CheckReport:
    """Claim intensity bounded away from 0 on the elapsed-time nodes of ``[0, T]``."""
    w = np.linspace(0.0, params.T, int(n_s) + 1)
    lam = np.asarray(hazard(params.hazard, w), dtype=float)
    k = int(np.argmin(lam))
    shortfall = max(floor - float(lam[k]), 0.0)
    return _verdict(
        "hazard_positive", shortfall, {"w": float(w[k])}, 0.0,
        min_hazard=float(lam[k]), floor=floor,
    )


def _moduli(V: ValueField) -> dict[str, float]:
    """Largest nearest-neighbour difference of ``V`` along each axis."""
    grid = V.grid
    vals = V.values
    row_i, row_k = _row_index(grid)
    inner = np.flatnonzero(row_i < grid.n_s)
    d_s = np.abs(vals[_tri(row_i[inner] + 1) + row_k[inner]] - vals[inner])
    d_x = np.abs(np.diff(vals, axis=1))
    has_next_k = np.flatnonzero(row_k < row_i)
    d_w = np.abs(vals[has_next_k + 1] - vals[has_next_k])
    return {
        "s": float(d_s.max(initial=0.0)),
        "x": float(d_x.max(initial=0.0)),
        "w": float(d_w.max(initial=0.0)),
    }


def check_continuity_modulus(coarse: ValueField, fine: ValueField, factor: float = MODULUS_FACTOR) -> CheckReport:
    """Neighbour differences must shrink by ``factor`` when the resolution doubles.

    The violation is the largest of ``fine - factor * coarse`` over the three
    axes, so a field that is exactly flat along an axis passes on that axis.
    """
    if (fine.grid.n_s, fine.grid.n_x) != (2 * coarse.grid.n_s, 2 * coarse.grid.n_x):
        raise DomainError("continuity probe needs the fine grid at twice the coarse resolution")
    mc, mf = _moduli(coarse), _moduli(fine)
    excess = {a: mf[a] - factor * mc[a] for a in ("s", "x", "w")}
    axis = max(excess, key=excess.get)
    return _verdict(
        "continuity_modulus", max(excess[axis], 0.0), {"axis": axis}, 0.0,
        factor=factor, coarse=mc, fine=mf,
    )


def default_test_points(params: ModelParams) -> list[tuple[float, float, float]]:
    """Five interior states spread over time, surplus and elapsed time."""
    T = params.T
    frac = [(0.0, 0.4, 0.0), (0.0, 0.8, 0.0), (0.2, 1 / 3, 0.5), (0.5, 0.25, 0.4), (0.8, 1 / 3, 0.5)]
    pts = []
    for fs, fx, fw in frac:
        s = fs * T
        pts.append((s, fx * barrier(params, s), fw * s))
    return pts


def crosscheck_mc(
    V: ValueField,
    Q: PolicyField,
    params: ModelParams,
    points: Sequence[tuple[float, float, float]] | None = None,
    n_paths: int = 10**6,
    seed: int = 0,
    *,
    eps_grid: float = EPS_GRID,
    constants: Iterable[float] = (0.0, 0.5, 1.0),
    workers: int | None = None,
) -> CheckReport:
    """Simulated survival against ``V`` at test states.

    The extracted table policy must land within ``3 se + eps_grid`` of ``V``;
    each constant retention must not beat ``V`` by more than that slack.  The
    violation is the worst excess over ``3 se``, compared with ``eps_grid``.
    """
    if points is None:
        points = default_test_points(params)
    table = TablePolicy.from_field(Q)
    policies = [("table", table)] + [(f"constant({q:g})", ConstantPolicy(q)) for q in constants]
    rows = []
    worst, loc = -math.inf, None
    for pt in points:
        v = interpolate_value(V, *pt)
        for label, pol in policies:
            est = estimate_survival(params, pol, State(*pt), n_paths, seed, workers=workers)
            gap = est.mean - v
            excess = (abs(gap) if label == "table" else gap) - 3.0 * est.std_error
            rows.append({
                "state": [float(c) for c in pt], "policy": label, "V": v,
                "mean": est.mean, "std_error": est.std_error, "excess": excess,
            })
            if excess > worst:
                worst, loc = excess, {"state": [float(c) for c in pt], "policy": label}
    return _verdict(
        "crosscheck_mc", max(worst, 0.0), loc, eps_grid,
        n_paths=int(n_paths), seed=int(seed), rows=rows,
    )


def check_dpp(
    V: ValueField,
    Q: PolicyField,
    params: ModelParams,
    point: tuple[float, float, float],
    h: float,
    n_paths: int = 10**6,
    seed: int = 0,
    *,
    eps_grid: float = EPS_GRID,
    workers: int | None = None,
) -> CheckReport:
    """``V`` at ``point`` against ``E[V]`` at the state reached after ``h`` under the table policy.

    Ruined paths contribute 0.  ``h`` must be a multiple of the time step.
    """
    grid = V.grid
    s, x, w = (float(c) for c in point)
    steps = h / grid.ds
    if h < 0.0 or abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or s + h > params.T * (1 + 1e-12):
        raise DomainError(f"h={h!r} must be a non-negative multiple of ds={grid.ds} with s + h <= T")
    tau = min(s + round(steps) * grid.ds, params.T)
    v0 = interpolate_value(V, s, x, w)
    if round(steps) == 0:
        mean, se = v0, 0.0
    else:
        ruined, xs, ws = stopped_states(params, TablePolicy.from_field(Q), State(s, x, w), tau, n_paths, seed, workers=workers)
        vals = _stopped_values(V.values, grid.n_s, grid.n_x, grid.T, grid.eta_p, tau, ruined, xs, ws)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    excess = abs(mean - v0) - 3.0 * se
    return _verdict(
        f"dpp(h={h:g})", max(excess, 0.0), {"state": [s, x, w]}, eps_grid,
        V=v0, mean=mean, std_error=se, n_paths=int(n_paths), seed=int(seed),
    )


def run_suite(
    V: ValueField,
    Q: PolicyField,
    params: ModelParams,
    *,
    coarse: ValueField | None = None,
    points: Sequence[tuple[float, float, float]] | None = None,
    dpp_point: tuple[float, float, float] | None = None,
    dpp_h: Iterable[float] = (),
    n_paths: int = 10**5,
    seed: int = 0,
    eps_grid: float = EPS_GRID,
    workers: int | None = None,
) -> list[CheckReport]:
    """All checks that apply, ordered by name.

    Monte Carlo checks run only when ``n_paths > 0``; the continuity probe
    only when a ``coarse`` field at half the resolution is supplied.
    """
    reports = [
        check_bounds_and_boundaries(V, params),
        check_monotonicity(V, params),
        check_w_inequality(V, params),
        check_memoryless(V, params),
        check_hazard_positive(params, V.grid.n_s),
    ]
    if coarse is not None:
        reports.append(check_continuity_modulus(coarse, V))
    if n_paths > 0:
        reports.append(crosscheck_mc(V, Q, params, points, n_paths, seed, eps_grid=eps_grid, workers=workers))
        if dpp_point is not None:
            for h in dpp_h:
                reports.append(check_dpp(V, Q, params, dpp_point, h, n_paths, seed, eps_grid=eps_grid, workers=workers))
    return sorted(reports, key=lambda r: r.name)


def all_passed(reports: Iterable[CheckReport]) -> bool:
    return all(r.passed for r in reports)


def report_json(reports: Iterable[CheckReport]) -> str:
    """Deterministic JSON rendering of a list of reports."""
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
