"""Exact-event Monte Carlo for the controlled surplus process.

Claim times are drawn from the conditional waiting-time law given the elapsed
time ``w``; between claims the surplus follows its deterministic flow, with
drift-induced ruin located analytically.  A state-dependent (table) policy is
re-read at every claim and at the absolute times ``k * ds / substeps`` and
held in between; a claim is ceded at the retention in force on the interval
it ends, so premium and claim always share one ``q``.  The schedule never
looks at the next claim time.

Path ``n`` of a run with seed ``seed`` consumes the counter-based stream
``(seed, n)``, alternating one inter-arrival draw and one claim-size draw, so
estimates are reproducible independently of chunking and worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .distributions import claim_quantile_kernel, sample_gap_kernel
from .errors import DomainError, NumericalError
from .model import ConstantPolicy, ModelParams, Policy, State, TablePolicy, table_retention
from .rng import PathStream, path_key, uniform_at

__all__ = [
    "PathRecord",
    "EstimateCI",
    "simulate_path",
    "estimate_survival",
    "stopped_states",
    "write_path_log",
]

EV_START, EV_CLAIM, EV_RUIN, EV_END = 0, 1, 2, 3
EVENT_NAMES = {EV_START: "start", EV_CLAIM: "claim", EV_RUIN: "ruin", EV_END: "end"}

ST_SURVIVED, ST_RUINED = 0, 1
ST_NUMERICAL, ST_STREAM_EXHAUSTED, ST_EVENTS_FULL = -1, -2, -3

CHUNK = 1 << 15
SUBSTEPS = 1
_NO_TABLE = np.zeros((1, 1))
_NO_EVENTS = np.zeros((0, 6))
_NO_UNIFORMS = np.zeros(0)


@njit(cache=True, nogil=True)
def _record(events, n_ev, kind, t, x, w, q, y):
    if n_ev < events.shape[0]:
        events[n_ev, 0] = kind
        events[n_ev, 1] = t
        events[n_ev, 2] = x
        events[n_ev, 3] = w
        events[n_ev, 4] = q
        events[n_ev, 5] = y
    return n_ev + 1


@njit(cache=True, nogil=True)
def _run_path(key, uniforms, ctr, s0, x0, w0, t_stop, p, eta, T,
              hz_kind, hz_a, hz_b, cl_kind, cl_a, cl_b,
              q_const, table, n_s, n_x, substeps, early_exit, events):
    """Simulate one path from ``(s0, x0, w0)`` up to ruin or ``t_stop``.

    ``q_const < 0`` selects the table policy.  Returns ``(status, t, x, w,
    n_claims, n_events, next_counter)``; ``t`` is the ruin time when ruined.
    """
    eta_p = eta * p
    use_table = q_const < 0.0
    h = T / (n_s * substeps) if use_table else np.inf
    exit_ok = early_exit and t_stop >= T and (use_table or q_const == 0.0)
    t = s0
    x = x0
    w = w0
    n_claims = 0
    n_ev = _record(events, 0, EV_START, t, x, w, np.nan, np.nan)
    while True:
        if exit_ok and x > eta_p * (T - t):
            n_ev = _record(events, n_ev, EV_END, t, x, w, np.nan, np.nan)
            return ST_SURVIVED, t, x, w, n_claims, n_ev, ctr
        if t >= t_stop:
            n_ev = _record(events, n_ev, EV_END, t, x, w, np.nan, np.nan)
            return ST_SURVIVED, t, x, w, n_claims, n_ev, ctr
        if uniforms.size > 0:
            if ctr >= uniforms.size:
                return ST_STREAM_EXHAUSTED, t, x, w, n_claims, n_ev, ctr
            u = uniforms[ctr]
        else:
            u = uniform_at(key, ctr)
        ctr += 1
        gap = sample_gap_kernel(hz_kind, hz_a, hz_b, w, u)
        if math.isnan(gap):
            return ST_NUMERICAL, t, x, w, n_claims, n_ev, ctr
        t_claim = t + gap
        t_end = min(t_claim, t_stop)

        # deterministic flow on [t, t_end]
        q = q_const
        if use_table and not t < t_end:
            q = table_retention(table, n_s, n_x, T, eta_p, t, x, w)
        while t < t_end:
            if exit_ok and x > eta_p * (T - t):
                n_ev = _record(events, n_ev, EV_END, t, x, w, np.nan, np.nan)
                return ST_SURVIVED, t, x, w, n_claims, n_ev, ctr
            if use_table:
                q = table_retention(table, n_s, n_x, T, eta_p, t, x, w)
                nxt = (math.floor(t / h) + 1.0) * h
                if nxt - t <= 1e-12 * T:
                    nxt += h
                last = t_end <= nxt
                dt = t_end - t if last else nxt - t
            else:
                last = True
                dt = t_end - t
            slope = p * (q * (1.0 + eta) - eta)
            if slope < 0.0 and x < -slope * dt:
                t_ruin = t + x / (-slope)
                n_ev = _record(events, n_ev, EV_RUIN, t_ruin, 0.0, w + (t_ruin - t), q, np.nan)
                return ST_RUINED, t_ruin, 0.0, w + (t_ruin - t), n_claims, n_ev, ctr
            x += slope * dt
            w += dt
            t = t_end if last else nxt

        if t_claim >= t_stop:
            continue

        # claim at t_claim = t
        if uniforms.size > 0:
            if ctr >= uniforms.size:
                return ST_STREAM_EXHAUSTED, t, x, w, n_claims, n_ev, ctr
            u = uniforms[ctr]
        else:
            u = uniform_at(key, ctr)
        ctr += 1
        y = claim_quantile_kernel(cl_kind, cl_a, cl_b, u)
        x -= q * y
        n_claims += 1
        n_ev = _record(events, n_ev, EV_CLAIM, t, x, w, q, y)
        if x < 0.0:
            n_ev = _record(events, n_ev, EV_RUIN, t, x, w, q, y)
            return ST_RUINED, t, x, w, n_claims, n_ev, ctr
        w = 0.0


@njit(cache=True, nogil=True)
def _count_survivors(seed, start, stop, s0, x0, w0, p, eta, T,
                     hz_kind, hz_a, hz_b, cl_kind, cl_a, cl_b,
                     q_const, table, n_s, n_x, substeps, early_exit):
    events = np.zeros((0, 6))
    uniforms = np.zeros(0)
    survived = 0
    for n in range(start, stop):
        key = path_key(seed, n)
        res = _run_path(key, uniforms, 0, s0, x0, w0, T, p, eta, T,
                        hz_kind, hz_a, hz_b, cl_kind, cl_a, cl_b,
                        q_const, table, n_s, n_x, substeps, early_exit, events)
        status = res[0]
        if status < 0:
            return -1 - n
        if status == ST_SURVIVED:
            survived += 1
    return survived


@njit(cache=True, nogil=True)
def _stopped(seed, start, stop, s0, x0, w0, t_stop, p, eta, T,
             hz_kind, hz_a, hz_b, cl_kind, cl_a, cl_b,
             q_const, table, n_s, n_x, substeps, ruined, xs, ws):
    events = np.zeros((0, 6))
    uniforms = np.zeros(0)
    for n in range(start, stop):
        key = path_key(seed, n)
        res = _run_path(key, uniforms, 0, s0, x0, w0, t_stop, p, eta, T,
                        hz_kind, hz_a, hz_b, cl_kind, cl_a, cl_b,
                        q_const, table, n_s, n_x, substeps, False, events)
        if res[0] < 0:
            return -1 - n
        ruined[n - start] = res[0] == ST_RUINED
        xs[n - start] = res[2]
        ws[n - start] = res[3]
    return 0


# --------------------------------------------------------------------------


@dataclass
class PathRecord:
    """Outcome of one simulated path.

    ``events`` lists the claims as ``(time, claim size, retention, surplus
    after the claim)``; ``trace`` keeps every recorded event row
    ``(kind, t, x, w, q, claim size)`` for path logs.
    """

    ruined: bool
    ruin_time: float | None
    n_claims: int
    events: list[tuple[float, float, float, float]]
    final_time: float
    final_surplus: float
    final_elapsed: float
    trace: np.ndarray


@dataclass(frozen=True)
class EstimateCI:
    mean: float
    std_error: float
    n_paths: int
    seed: int


def _policy_args(policy: Policy):
    if isinstance(policy, ConstantPolicy):
        return policy.q, _NO_TABLE, 1, 1
    if isinstance(policy, TablePolicy):
        return -1.0, policy.values, policy.n_s, policy.n_x
    raise TypeError(f"unsupported policy {type(policy).__name__}")


def _check_init(params: ModelParams, init: State) -> tuple[float, float, float]:
    s, x, w = float(init.s), float(init.x), float(init.w)
    if not (0.0 <= s <= params.T and 0.0 <= w <= s and math.isfinite(x) and x >= 0.0):
        raise DomainError(f"initial state {init} outside 0<=s<=T, 0<=w<=s, x>=0")
    return s, x, w


def _model_args(params: ModelParams):
    return (params.p, params.eta, params.T, *params.hazard.code, *params.claims.code)


def simulate_path(
    params: ModelParams,
    policy: Policy,
    init: State,
    stream: PathStream | Sequence[float],
    *,
    t_stop: float | None = None,
    early_exit: bool = False,
    substeps: int = SUBSTEPS,
) -> PathRecord:
    """Simulate a single path on ``[init.s, T]`` (or up to ``t_stop``).

    ``stream`` is either a :class:`PathStream` (advanced by the draws used) or
    an explicit sequence of uniforms, consumed alternately as inter-arrival and
    claim-size draws.
    """
    s, x, w = _check_init(params, init)
    t_stop = params.T if t_stop is None else float(t_stop)
    if not s <= t_stop <= params.T:
        raise DomainError(f"t_stop must lie in [{s}, {params.T}]")
    if isinstance(stream, PathStream):
        key, uniforms, ctr = stream.key, _NO_UNIFORMS, stream.counter
    else:
        uniforms = np.asarray(stream, dtype=float)
        if np.any(~((uniforms > 0.0) & (uniforms < 1.0))):
            raise DomainError("explicit uniforms must lie in (0, 1)")
        key, ctr = np.uint64(0), 0
    q_const, table, n_s, n_x = _policy_args(policy)
    cap = 64
    while True:
        events = np.zeros((cap, 6))
        status, t, xe, we, n_claims, n_ev, ctr_out = _run_path(
            key, uniforms, ctr, s, x, w, t_stop, *_model_args(params), q_const, table, n_s, n_x, _substeps(substeps), early_exit, events,
        )
        if n_ev <= cap:
            break
        cap = 2 * n_ev
    if status == ST_NUMERICAL:
        raise NumericalError("inter-arrival sampling failed")
    if status == ST_STREAM_EXHAUSTED:
        raise DomainError("explicit uniform stream exhausted before the path ended")
    if isinstance(stream, PathStream):
        stream.counter = ctr_out
    trace = events[:n_ev]
    claims = [(r[1], r[5], r[4], r[2]) for r in trace if r[0] == EV_CLAIM]
    ruined = status == ST_RUINED
    return PathRecord(
        ruined=ruined,
        ruin_time=t if ruined else None,
        n_claims=int(n_claims),
        events=claims,
        final_time=t,
        final_surplus=xe,
        final_elapsed=we,
        trace=trace,
    )


def _substeps(m: int) -> int:
    if int(m) != m or m < 1:
        raise DomainError(f"substeps must be a positive integer, got {m!r}")
    return int(m)


def _n_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("RUINOPT_WORKERS", "1"))
    return max(1, int(workers))


def _run_chunks(fn, n_paths: int, workers: int | None):
    bounds = [(a, min(a + CHUNK, n_paths)) for a in range(0, n_paths, CHUNK)]
    n_workers = _n_workers(workers)
    if n_workers == 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(n_workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


def estimate_survival(
    params: ModelParams,
    policy: Policy,
    init: State,
    n_paths: int,
    seed: int,
    *,
    workers: int | None = None,
    early_exit: bool = True,
    substeps: int = SUBSTEPS,
) -> EstimateCI:
    """Fraction of ``n_paths`` simulated paths that never ruin before ``T``.

    ``early_exit`` stops a path as soon as the surplus is strictly above the
    barrier when the policy cedes everything there (table policies and
    ``ConstantPolicy(0)``); the outcome is the same as simulating on.
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise DomainError(f"n_paths must be a positive integer, got {n_paths!r}")
    if seed < 0:
        raise DomainError("seed must be non-negative")
    n_paths = int(n_paths)
    s, x, w = _check_init(params, init)
    q_const, table, n_s, n_x = _policy_args(policy)
    args = _model_args(params)
    m = _substeps(substeps)

    def chunk(a, b):
        return _count_survivors(np.uint64(seed), a, b, s, x, w, *args,
                                q_const, table, n_s, n_x, m, early_exit)

    counts = _run_chunks(chunk, n_paths, workers)
    bad = [c for c in counts if c < 0]
    if bad:
        raise NumericalError(f"inter-arrival sampling failed on path {-1 - bad[0]}")
    survived = sum(counts)
    mean = survived / n_paths
    return EstimateCI(mean, math.sqrt(mean * (1.0 - mean) / n_paths), n_paths, int(seed))


def stopped_states(
    params: ModelParams,
    policy: Policy,
    init: State,
    t_stop: float,
    n_paths: int,
    seed: int,
    *,
    workers: int | None = None,
    substeps: int = SUBSTEPS,
):
    """States at ``min(t_stop, ruin time)``: arrays ``(ruined, x, w)`` over paths."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise DomainError(f"n_paths must be a positive integer, got {n_paths!r}")
    s, x, w = _check_init(params, init)
    if not s <= t_stop <= params.T:
        raise DomainError(f"t_stop must lie in [{s}, {params.T}]")
    n_paths = int(n_paths)
    q_const, table, n_s, n_x = _policy_args(policy)
    args = _model_args(params)
    ruined = np.zeros(n_paths, dtype=np.bool_)
    xs = np.zeros(n_paths)
    ws = np.zeros(n_paths)
    m = _substeps(substeps)

    def chunk(a, b):
        return _stopped(np.uint64(seed), a, b, s, x, w, float(t_stop), *args,
                        q_const, table, n_s, n_x, m, ruined[a:b], xs[a:b], ws[a:b])

    codes = _run_chunks(chunk, n_paths, workers)
    bad = [c for c in codes if c < 0]
    if bad:
        raise NumericalError(f"inter-arrival sampling failed on path {-1 - bad[0]}")
    return ruined, xs, ws


def write_path_log(path, records: Sequence[PathRecord], start_id: int = 0, header: str | None = None) -> None:
    """Line-per-event CSV: ``path_id,event_type,t,x,w,q,claim_size``.

    ``header``, when given, is written verbatim as the first line.
    """
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(header.rstrip("\n") + "\n")
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["path_id", "event_type", "t", "x", "w", "q", "claim_size"])
        for n, rec in enumerate(records, start=start_id):
            for kind, t, x, w, q, y in rec.trace:
                out.writerow([n, EVENT_NAMES[int(kind)]] + [_fmt(v) for v in (t, x, w, q, y)])


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else format(float(v), ".17g")
