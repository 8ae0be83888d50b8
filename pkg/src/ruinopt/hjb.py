"""Backward semi-Lagrangian solver for the maximal survival probability.

The state ``(s, x, w)`` is discretised with ``ds = T / n_s``, ``dx = eta p T / n_x``
and ``dw = ds``, so that the elapsed-time coordinate is transported exactly:
one backward step maps elapsed index ``k`` at time ``s_i`` to ``k + 1`` at
``s_{i+1}``.  Per node and candidate retention ``q`` the update is

    e^{-dL} * V_{i+1}(x + ds * drift(q), w + ds)
        + (1 - e^{-dL}) * J(V_mid, x + ds/2 * drift(q), q)

with ``dL`` the integrated hazard over the step, ``J`` the expected value just
after a claim (quadrature in probability space), and ``V_mid`` the average of
the ``w = 0`` slices at ``s_i`` (predicted) and ``s_{i+1}``.  ``V_i`` is the max
over a uniform ``q`` grid; the argmax (smallest ``q`` on ties) is the policy.

Fields use a packed triangular layout: row ``tri(i) + k`` holds the surplus
profile at ``(s_i, w_k)``, ``k <= i``.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._interp import clamp_state, interp_field, tri
from .distributions import claim_cdf, claim_quantile_unchecked, hazard, hazard_increment
from .errors import DomainError
from .model import ModelParams

__all__ = [
    "Grid",
    "ValueField",
    "PolicyField",
    "Diagnostics",
    "build_grid",
    "q_grid",
    "jump_value",
    "backward_step",
    "solve",
    "hjb_residual",
    "default_residual_points",
    "interpolate_value",
]

logger = logging.getLogger(__name__)

DEFAULT_N_Q = 21
DEFAULT_N_QUAD = 64


@dataclass(frozen=True)
class Grid:
    n_s: int
    n_x: int
    T: float
    eta_p: float

    @property
    def ds(self) -> float:
        return self.T / self.n_s

    @property
    def dx(self) -> float:
        return self.eta_p * self.T / self.n_x

    @property
    def dw(self) -> float:
        return self.ds

    @property
    def s_nodes(self) -> np.ndarray:
        return np.arange(self.n_s + 1) * self.ds

    @property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.n_x + 1) * self.dx

    def w_extent(self, i: int) -> np.ndarray:
        """Elapsed-time nodes available at time index ``i`` (``w_k <= s_i``)."""
        return np.arange(i + 1) * self.ds

    @property
    def n_rows(self) -> int:
        return tri(self.n_s + 1)

    @property
    def node_count(self) -> int:
        return self.n_rows * (self.n_x + 1)

    def rows(self, i: int) -> slice:
        return slice(tri(i), tri(i + 1))

    def barrier_index(self, i: int) -> int:
        """Smallest ``j`` with ``x_j >= barrier(s_i)``, computed in integers."""
        return -((-(self.n_s - i) * self.n_x) // self.n_s)

    def is_terminal(self, i: int) -> bool:
        return i == self.n_s


def build_grid(params: ModelParams, n_s: int, n_x: int) -> Grid:
    for name, n in (("n_s", n_s), ("n_x", n_x)):
        if int(n) != n or n < 2:
            raise DomainError(f"{name} must be an integer >= 2, got {n!r}")
    return Grid(int(n_s), int(n_x), params.T, params.eta_p)


def q_grid(n_q: int) -> np.ndarray:
    if int(n_q) != n_q or n_q < 2:
        raise DomainError(f"n_q must be an integer >= 2, got {n_q!r}")
    return np.linspace(0.0, 1.0, int(n_q))


@dataclass(frozen=True, eq=False)
class ValueField:
    grid: Grid
    values: np.ndarray

    def slice(self, i: int) -> np.ndarray:
        """Values at time index ``i`` as an ``(n_x + 1, i + 1)`` array indexed ``[j, k]``."""
        return self.values[self.grid.rows(i)].T

    def __getitem__(self, ijk):
        i, j, k = ijk
        if not 0 <= k <= i:
            raise IndexError(f"elapsed index {k} outside [0, {i}]")
        return self.values[tri(i) + k, j]


@dataclass(frozen=True, eq=False)
class PolicyField:
    grid: Grid
    q_values: np.ndarray
    index: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.q_values[self.index]

    def slice(self, i: int) -> np.ndarray:
        return self.q_values[self.index[self.grid.rows(i)].T]

    def __getitem__(self, ijk):
        i, j, k = ijk
        if not 0 <= k <= i:
            raise IndexError(f"elapsed index {k} outside [0, {i}]")
        return self.q_values[self.index[tri(i) + k, j]]


@dataclass
class Diagnostics:
    node_count: int
    max_monotonicity_violation: float
    wall_time: float
    n_q: int
    n_quad: int
    extra: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Quadrature and interpolation building blocks


def _simpson_coefficients(n: int) -> np.ndarray:
    c = np.full(n + 1, 2.0)
    c[1::2] = 4.0
    c[0] = c[-1] = 1.0
    return c


def _check_n_quad(n_quad: int) -> int:
    if int(n_quad) != n_quad or n_quad < 2 or n_quad % 2:
        raise DomainError(f"n_quad must be an even integer >= 2, got {n_quad!r}")
    return int(n_quad)


def _jump_nodes(params: ModelParams, x, q: float, n_quad: int):
    """Surplus positions after a claim and their quadrature weights.

    For claim-size quantiles ``y_m = G^{-1}(u_m)`` on a uniform grid
    ``u_m`` over ``[0, G(x / q)]`` returns ``x - q * y_m`` (shape ``x.shape +
    (n_quad + 1,)``) and composite Simpson weights, so that the expected value
    just after a claim is ``sum(weights * V(positions))``.  Claims beyond
    ``x / q`` ruin and contribute nothing; ``q = 0`` means the claim is fully
    ceded and the result is ``V(x)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if q == 0.0:
        pos = x[:, None].copy()
        weights = np.where(x >= 0.0, 1.0, 0.0)[:, None]
        return pos, weights
    limit = np.where(x > 0.0, x / q, 0.0)
    upper = np.asarray(claim_cdf(params.claims, limit), dtype=float).reshape(x.shape)
    frac = np.arange(n_quad + 1) / n_quad
    u = upper[:, None] * frac[None, :]
    y = np.minimum(claim_quantile_unchecked(params.claims, u), limit[:, None])
    pos = np.maximum(x[:, None] - q * y, 0.0)
    weights = (upper / (3.0 * n_quad))[:, None] * _simpson_coefficients(n_quad)[None, :]
    return pos, weights


def _interp_weights(pos: np.ndarray, dx: float, n_x: int):
    """Linear interpolation into an extended row ``[0, V_0 .. V_nx, 1]``.

    Positions below 0 read the leading 0 (ruin), positions at or beyond the
    top node read the trailing 1.
    """
    top = n_x + 2
    f = pos / dx
    lo = np.floor(f)
    frac = f - lo
    lo = lo.astype(np.int64) + 1
    below = pos < 0.0
    above = f >= n_x
    lo[below] = 0
    frac[below] = 0.0
    lo[above] = top
    frac[above] = 0.0
    hi = np.minimum(lo + 1, top)
    return lo, hi, frac


def _extend(rows: np.ndarray) -> np.ndarray:
    m = rows.shape[0]
    ext = np.empty((m, rows.shape[1] + 2))
    ext[:, 0] = 0.0
    ext[:, 1:-1] = rows
    ext[:, -1] = 1.0
    return ext


def _interp_row(v: np.ndarray, dx: float, pos) -> np.ndarray:
    lo, hi, frac = _interp_weights(np.asarray(pos, dtype=float), dx, v.size - 1)
    ext = _extend(v[None, :])[0]
    return ext[lo] * (1.0 - frac) + ext[hi] * frac


def jump_value(v_zero, params: ModelParams, x: float, q: float, n_quad: int = DEFAULT_N_QUAD) -> float:
    """Expected value just after a claim, ``int_0^{x/q} V(x - q y, 0) dG(y)``.

    ``v_zero`` holds the ``w = 0`` profile on the uniform surplus grid over
    ``[0, eta p T]``; values between nodes are linearly interpolated, values
    above the grid are 1.  Integrates in probability space with composite
    Simpson on ``n_quad`` subintervals.
    """
    v_zero = np.asarray(v_zero, dtype=float)
    n_quad = _check_n_quad(n_quad)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"retention must lie in [0, 1], got {q!r}")
    dx = params.eta_p * params.T / (v_zero.size - 1)
    pos, weights = _jump_nodes(params, [x], float(q), n_quad)
    return float(np.sum(weights[0] * _interp_row(v_zero, dx, pos[0])))


# --------------------------------------------------------------------------
# One backward step


class _StepOperator:
    """Everything in a backward step that does not depend on the time index."""

    def __init__(self, params: ModelParams, grid: Grid, n_q: int, n_quad: int, jump_offset: float = 0.5):
        self.params = params
        self.grid = grid
        self.q = q_grid(n_q)
        self.n_quad = _check_n_quad(n_quad)
        n_x = grid.n_x
        x = grid.x_nodes
        drift = params.drift(self.q)
        flow = x[None, :] + grid.ds * drift[:, None]
        self.flow_lo, self.flow_hi, self.flow_frac = _interp_weights(flow, grid.dx, n_x)

        rows, cols, data = [], [], []
        for a, qa in enumerate(self.q):
            pos, weights = _jump_nodes(params, x + jump_offset * grid.ds * drift[a], float(qa), self.n_quad)
            lo, hi, frac = _interp_weights(pos, grid.dx, n_x)
            r = np.broadcast_to((a * (n_x + 1) + np.arange(n_x + 1))[:, None], lo.shape)
            rows += [r.ravel(), r.ravel()]
            cols += [lo.ravel(), hi.ravel()]
            data += [(weights * (1.0 - frac)).ravel(), (weights * frac).ravel()]
        self.jump_matrix = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(self.q) * (n_x + 1), n_x + 3),
        ).tocsr()

        w = grid.s_nodes[:-1]
        self.survive = np.exp(-hazard_increment(params.hazard, w, grid.ds))

    def jump(self, v_zero: np.ndarray) -> np.ndarray:
        """Post-claim expectations for every ``(q, x_j)``, shape ``(n_q, n_x + 1)``."""
        ext = _extend(v_zero[None, :])[0]
        return (self.jump_matrix @ ext).reshape(len(self.q), self.grid.n_x + 1)

    def flow(self, rows_next: np.ndarray) -> np.ndarray:
        """No-claim continuation values, shape ``(m, n_q, n_x + 1)``."""
        ext = _extend(rows_next)
        return ext[:, self.flow_lo] * (1.0 - self.flow_frac) + ext[:, self.flow_hi] * self.flow_frac

    def best(self, flow: np.ndarray, jump: np.ndarray, survive: np.ndarray):
        e = survive[:, None, None]
        cand = e * flow + (1.0 - e) * jump[None, :, :]
        idx = np.argmax(cand, axis=1)
        v = np.take_along_axis(cand, idx[:, None, :], axis=1)[:, 0, :]
        return np.minimum(v, 1.0), idx


def _n_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("RUINOPT_WORKERS", "1"))
    return max(1, int(workers))


def _step(op: _StepOperator, rows_next: np.ndarray, i: int, pool: ThreadPoolExecutor | None):
    """Rows ``(k, j)`` of slice ``i`` and their argmax indices from rows of slice ``i + 1``."""
    grid = op.grid
    jb = grid.barrier_index(i)
    survive = op.survive[: i + 1]

    flow0 = op.flow(rows_next[1:2])
    pred, _ = op.best(flow0, op.jump(rows_next[0]), survive[:1])
    pred = pred[0]
    pred[jb:] = 1.0
    jump = op.jump(0.5 * (pred + rows_next[0]))

    def chunk(lo_hi):
        lo, hi = lo_hi
        return op.best(op.flow(rows_next[lo + 1 : hi + 1]), jump, survive[lo:hi])

    n = i + 1
    if pool is None or n < 8:
        v, idx = chunk((0, n))
    else:
        bounds = np.linspace(0, n, pool._max_workers + 1).astype(int)
        parts = list(pool.map(chunk, [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]))
        v = np.concatenate([p[0] for p in parts])
        idx = np.concatenate([p[1] for p in parts])
    v[:, jb:] = 1.0
    idx[:, jb:] = 0
    return v, idx


def backward_step(
    v_next: np.ndarray,
    grid: Grid,
    params: ModelParams,
    n_q: int = DEFAULT_N_Q,
    n_quad: int = DEFAULT_N_QUAD,
):
    """Advance one step backwards in time.

    ``v_next`` is the ``(n_x + 1, i + 2)`` slice at ``s_{i+1}``; returns the
    ``(n_x + 1, i + 1)`` value slice at ``s_i`` and the maximising retentions.
    """
    v_next = np.asarray(v_next, dtype=float)
    i = v_next.shape[1] - 2
    if v_next.shape[0] != grid.n_x + 1 or not 0 <= i < grid.n_s:
        raise DomainError(f"slice shape {v_next.shape} does not fit the grid")
    op = _StepOperator(params, grid, n_q, n_quad)
    v, idx = _step(op, np.ascontiguousarray(v_next.T), i, None)
    return v.T, op.q[idx].T


# --------------------------------------------------------------------------
# Full sweep


def _config_tag(params: ModelParams, grid: Grid, n_q: int, n_quad: int) -> str:
    return repr((params, grid, n_q, n_quad))


def solve(
    params: ModelParams,
    n_s: int = 200,
    n_x: int = 200,
    n_q: int = DEFAULT_N_Q,
    n_quad: int = DEFAULT_N_QUAD,
    *,
    workers: int | None = None,
    checkpoint_dir: str | os.PathLike | None = None,
    checkpoint_every: int = 0,
    resume: bool = False,
):
    """Solve backwards from the terminal slice ``V(T, ., .) = 1``.

    Returns ``(ValueField, PolicyField, Diagnostics)``.  With ``checkpoint_dir``
    and ``checkpoint_every = m`` the partially filled fields are written every
    ``m`` slices; ``resume=True`` restarts from that file when it matches the
    current configuration.
    """
    t0 = time.perf_counter()
    grid = build_grid(params, n_s, n_x)
    op = _StepOperator(params, grid, n_q, n_quad)
    values = np.empty((grid.n_rows, grid.n_x + 1))
    index = np.zeros((grid.n_rows, grid.n_x + 1), dtype=np.int16)
    values[grid.rows(grid.n_s)] = 1.0
    start = grid.n_s - 1
    tag = _config_tag(params, grid, n_q, n_quad)

    ckpt = Path(checkpoint_dir) / "checkpoint.npz" if checkpoint_dir else None
    if resume and ckpt is not None and ckpt.exists():
        with np.load(ckpt) as data:
            if str(data["tag"]) == tag:
                i_done = int(data["i"])
                values[tri(i_done):] = data["values"]
                index[tri(i_done):] = data["index"]
                start = i_done - 1
                logger.info("resuming from slice %d", i_done)
            else:
                logger.warning("checkpoint %s belongs to another configuration; ignored", ckpt)

    n_workers = _n_workers(workers)
    pool = ThreadPoolExecutor(n_workers) if n_workers > 1 else None
    try:
        for i in range(start, -1, -1):
            rows_next = values[grid.rows(i + 1)]
            v, idx = _step(op, rows_next, i, pool)
            values[grid.rows(i)] = v
            index[grid.rows(i)] = idx
            if ckpt is not None and checkpoint_every > 0 and (grid.n_s - i) % checkpoint_every == 0:
                ckpt.parent.mkdir(parents=True, exist_ok=True)
                np.savez(ckpt, i=i, values=values[tri(i):], index=index[tri(i):], tag=tag)
    finally:
        if pool is not None:
            pool.shutdown()

    worst = 0.0
    for i in range(grid.n_s):
        nxt = values[grid.rows(i + 1)][: i + 1]
        worst = max(worst, float(np.max(values[grid.rows(i)] - nxt)))
    diag = Diagnostics(
        node_count=grid.node_count,
        max_monotonicity_violation=worst,
        wall_time=time.perf_counter() - t0,
        n_q=int(n_q),
        n_quad=int(n_quad),
    )
    logger.info("solved %d nodes in %.2fs", grid.node_count, diag.wall_time)
    return ValueField(grid, values), PolicyField(grid, op.q, index), diag


# --------------------------------------------------------------------------
# Evaluation helpers


def interpolate_value(field: ValueField, s: float, x: float, w: float) -> float:
    """Value at an arbitrary state: 0 below zero surplus, 1 at or above the barrier."""
    g = field.grid
    if x < 0.0:
        return 0.0
    s, x, w, bar = clamp_state(g.T, g.eta_p, float(s), float(x), float(w))
    if x >= bar:
        return 1.0
    return float(interp_field(field.values, g.n_s, g.n_x, g.ds, g.dx, s, x, w))


def default_residual_points(params: ModelParams) -> list[tuple[float, float, float]]:
    """Interior sample states on a coarse lattice, away from every boundary of the domain."""
    T = params.T
    pts = []
    for fs in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
        s = fs * T
        bar = params.eta_p * (T - s)
        for fx in (0.2, 0.4, 0.6, 0.8):
            for fw in (0.25, 0.5, 0.75):
                pts.append((s, fx * bar, fw * s))
    return pts


def _snap(grid: Grid, s: float, x: float, w: float) -> tuple[int, int, int]:
    i = int(round(s / grid.ds))
    j = int(round(x / grid.dx))
    k = int(round(w / grid.ds))
    return min(max(i, 0), grid.n_s), min(max(j, 0), grid.n_x), min(max(k, 0), i)


def hjb_residual(
    field: ValueField,
    params: ModelParams,
    points=None,
    n_q: int = DEFAULT_N_Q,
    n_quad: int = DEFAULT_N_QUAD,
    *,
    return_all: bool = False,
):
    """Discrete HJB operator applied to a value field at sampled interior nodes.

    At node ``(s_i, x_j, w_k)`` evaluates

        max_q { [V(s_{i+1}, x_j + ds drift(q), w_k + ds) - V(s_i, x_j, w_k)] / ds
                + hazard(w_k) * [J(V(s_i, ., 0), x_j, q) - V(s_i, x_j, w_k)] }

    i.e. a one-sided difference along the characteristic for the transport
    part and the post-claim expectation for the integral.  ``points`` are
    states snapped to their nearest node; terminal and barrier nodes are
    skipped.  Returns the largest absolute value (and per-node values when
    ``return_all``).
    """
    grid = field.grid
    if points is None:
        points = default_residual_points(params)
    op = _StepOperator(params, grid, n_q, n_quad, jump_offset=0.0)
    nodes = sorted({_snap(grid, *pt) for pt in points})
    nodes = [(i, j, k) for i, j, k in nodes if i < grid.n_s and j < grid.barrier_index(i)]
    jumps: dict[int, np.ndarray] = {}
    out = np.empty(len(nodes))
    for n, (i, j, k) in enumerate(nodes):
        if i not in jumps:
            jumps[i] = op.jump(field.slice(i)[:, 0])
        v = field[i, j, k]
        nxt = field.values[tri(i + 1) + k + 1]
        ext = _extend(nxt[None, :])[0]
        lo, hi, fr = op.flow_lo[:, j], op.flow_hi[:, j], op.flow_frac[:, j]
        flow = ext[lo] * (1.0 - fr) + ext[hi] * fr
        lam = float(hazard(params.hazard, k * grid.ds))
        out[n] = np.max((flow - v) / grid.ds + lam * (jumps[i][:, j] - v))
    worst = float(np.max(np.abs(out))) if out.size else 0.0
    if return_all:
        return worst, nodes, out
    return worst
