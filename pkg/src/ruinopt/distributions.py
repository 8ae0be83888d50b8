"""Inter-arrival (renewal) laws given by their hazard, and claim-size laws.

Every law is a small frozen dataclass.  The numerics live in numba-compiled
scalar kernels keyed by ``(kind, a, b)`` so that the Monte Carlo simulator can
call exactly the same code as the public functions below.

Randomness is never drawn here: samplers take an explicit uniform ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np
import llvmlite.binding as llvm
from numba import njit, types
from numba.extending import get_cython_function_address

from .errors import DomainError, NumericalError

__all__ = [
    "ConstantRate",
    "Erlang",
    "Weibull",
    "Exponential",
    "Gamma",
    "LogNormal",
    "HazardModel",
    "ClaimDistribution",
    "hazard",
    "cumulative_hazard",
    "hazard_increment",
    "sample_interarrival",
    "claim_cdf",
    "claim_quantile",
    "claim_sample",
]

HZ_CONSTANT, HZ_ERLANG, HZ_WEIBULL = 0, 1, 2
CL_EXPONENTIAL, CL_GAMMA, CL_LOGNORMAL = 0, 1, 2

ROOT_RTOL = 1e-12
_MAX_BRACKET_DOUBLINGS = 1100
_MAX_BISECTIONS = 400


def _scipy_special(name: str, symbol: str, nargs: int):
    # scipy's compiled special functions, exposed to numba under a stable
    # symbol name so that kernels calling them remain cacheable
    addr = get_cython_function_address("scipy.special.cython_special", name)
    llvm.add_symbol(symbol, addr)
    return types.ExternalFunction(symbol, types.float64(*([types.float64] * nargs)))


_ndtr = _scipy_special("__pyx_fuse_1ndtr", "ruinopt_ndtr", 1)
_ndtri = _scipy_special("ndtri", "ruinopt_ndtri", 1)
_gammainc = _scipy_special("gammainc", "ruinopt_gammainc", 2)
_gammaincinv = _scipy_special("gammaincinv", "ruinopt_gammaincinv", 2)


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be a finite number > 0, got {value!r}")
    return value


# --------------------------------------------------------------------------
# Law definitions


@dataclass(frozen=True)
class ConstantRate:
    """Exponential inter-arrival times (Poisson claim arrivals)."""

    rate: float
    kind: ClassVar[int] = HZ_CONSTANT

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    @property
    def code(self) -> tuple[int, float, float]:
        return (self.kind, self.rate, 0.0)


@dataclass(frozen=True)
class Erlang:
    """Sum of ``k`` independent exponential phases, each with rate ``rate``."""

    k: int
    rate: float
    kind: ClassVar[int] = HZ_ERLANG

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    @property
    def code(self) -> tuple[int, float, float]:
        return (self.kind, float(self.k), self.rate)


@dataclass(frozen=True)
class Weibull:
    """Weibull law with survival ``exp(-(t/scale)**shape)``."""

    shape: float
    scale: float
    kind: ClassVar[int] = HZ_WEIBULL

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "scale", _positive("scale", self.scale))

    @property
    def code(self) -> tuple[int, float, float]:
        return (self.kind, self.shape, self.scale)


@dataclass(frozen=True)
class Exponential:
    mean: float
    kind: ClassVar[int] = CL_EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "mean", _positive("mean", self.mean))

    @property
    def code(self) -> tuple[int, float, float]:
        return (self.kind, self.mean, 0.0)


@dataclass(frozen=True)
class Gamma:
    shape: float
    scale: float
    kind: ClassVar[int] = CL_GAMMA

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "scale", _positive("scale", self.scale))

    @property
    def code(self) -> tuple[int, float, float]:
        return (self.kind, self.shape, self.scale)


@dataclass(frozen=True)
class LogNormal:
    meanlog: float
    sdlog: float
    kind: ClassVar[int] = CL_LOGNORMAL

    def __post_init__(self):
        meanlog = float(self.meanlog)
        if not math.isfinite(meanlog):
            raise DomainError(f"meanlog must be finite, got {self.meanlog!r}")
        object.__setattr__(self, "meanlog", meanlog)
        object.__setattr__(self, "sdlog", _positive("sdlog", self.sdlog))

    @property
    def code(self) -> tuple[int, float, float]:
        return (self.kind, self.meanlog, self.sdlog)


HazardModel = Union[ConstantRate, Erlang, Weibull]
ClaimDistribution = Union[Exponential, Gamma, LogNormal]


# --------------------------------------------------------------------------
# Compiled scalar kernels


@njit(cache=True, nogil=True)
def _erlang_log_terms(k, z):
    # log of sum_{n<k} z^n / n!  and the log of its last term
    if z == 0.0:
        return 0.0, (0.0 if k == 1 else -np.inf)
    lz = math.log(z)
    top = -np.inf
    for n in range(k):
        t = n * lz - math.lgamma(n + 1.0)
        if t > top:
            top = t
    acc = 0.0
    for n in range(k):
        acc += math.exp(n * lz - math.lgamma(n + 1.0) - top)
    return top + math.log(acc), (k - 1) * lz - math.lgamma(float(k))


@njit(cache=True, nogil=True)
def hazard_kernel(kind, a, b, w):
    if kind == HZ_CONSTANT:
        return a
    if kind == HZ_ERLANG:
        k = int(a)
        log_sum, log_last = _erlang_log_terms(k, b * w)
        return b * math.exp(log_last - log_sum)
    if w == 0.0:
        if a < 1.0:
            return np.inf
        return 1.0 / b if a == 1.0 else 0.0
    return a / b * (w / b) ** (a - 1.0)


@njit(cache=True, nogil=True)
def cumulative_hazard_kernel(kind, a, b, w):
    if kind == HZ_CONSTANT:
        return a * w
    if kind == HZ_ERLANG:
        z = b * w
        log_sum, _ = _erlang_log_terms(int(a), z)
        return z - log_sum
    return (w / b) ** a


@njit(cache=True, nogil=True)
def sample_gap_kernel(kind, a, b, w, u):
    """Waiting time to the next renewal given elapsed time ``w``; NaN on failure."""
    e = -math.log(u)
    if kind == HZ_CONSTANT:
        return e / a
    if kind == HZ_WEIBULL:
        t = b * ((w / b) ** a + e) ** (1.0 / a) - w
        return t if t > 0.0 else 0.0
    k = int(a)
    if k == 1:
        return e / b
    target = cumulative_hazard_kernel(kind, a, b, w) + e
    lo = 0.0
    hi = 1.0 / b
    n = 0
    while cumulative_hazard_kernel(kind, a, b, w + hi) < target:
        lo = hi
        hi *= 2.0
        n += 1
        if n > _MAX_BRACKET_DOUBLINGS or not math.isfinite(hi):
            return np.nan
    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= ROOT_RTOL * hi:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if cumulative_hazard_kernel(kind, a, b, w + mid) < target:
            lo = mid
        else:
            hi = mid
    return np.nan


@njit(cache=True, nogil=True)
def claim_cdf_kernel(kind, a, b, y):
    if y <= 0.0:
        return 0.0
    if kind == CL_EXPONENTIAL:
        return -math.expm1(-y / a)
    if kind == CL_GAMMA:
        return _gammainc(a, y / b)
    return _ndtr((math.log(y) - a) / b)


@njit(cache=True, nogil=True)
def claim_quantile_kernel(kind, a, b, u):
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return np.inf
    if kind == CL_EXPONENTIAL:
        return -a * math.log1p(-u)
    if kind == CL_GAMMA:
        return b * _gammaincinv(a, u)
    return math.exp(a + b * _ndtri(u))


@njit(cache=True)
def _map_hazard(fn_id, kind, a, b, w):
    out = np.empty(w.size)
    for i in range(w.size):
        if fn_id == 0:
            out[i] = hazard_kernel(kind, a, b, w[i])
        else:
            out[i] = cumulative_hazard_kernel(kind, a, b, w[i])
    return out


@njit(cache=True)
def _map_claims(fn_id, kind, a, b, v):
    out = np.empty(v.size)
    for i in range(v.size):
        if fn_id == 0:
            out[i] = claim_cdf_kernel(kind, a, b, v[i])
        else:
            out[i] = claim_quantile_kernel(kind, a, b, v[i])
    return out


# --------------------------------------------------------------------------
# Public operations


def _elapsed(w):
    arr = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise DomainError(f"elapsed time must be finite and >= 0, got {w!r}")
    return arr


def _apply(mapper, fn_id, code, arr):
    if arr.ndim == 0:
        return float(mapper(fn_id, *code, arr.reshape(1))[0])
    return mapper(fn_id, *code, arr.ravel()).reshape(arr.shape)


def hazard(model: HazardModel, w):
    """Claim intensity ``f(w) / Fbar(w)`` at elapsed time ``w`` since the last claim."""
    return _apply(_map_hazard, 0, model.code, _elapsed(w))


def cumulative_hazard(model: HazardModel, w):
    """Integrated hazard ``int_0^w hazard(u) du``, so that ``Fbar(w) = exp(-value)``."""
    return _apply(_map_hazard, 1, model.code, _elapsed(w))


def hazard_increment(model: HazardModel, w, h: float):
    """Integrated hazard over ``[w, w + h]``; exact ``rate * h`` for a constant rate."""
    if isinstance(model, ConstantRate):
        return np.broadcast_to(model.rate * float(h), np.shape(w)).copy() if np.ndim(w) else model.rate * float(h)
    w = _elapsed(w)
    return cumulative_hazard(model, w + h) - cumulative_hazard(model, w)


def sample_interarrival(model: HazardModel, w: float, u: float) -> float:
    """Time until the next claim given that ``w`` has elapsed since the last one.

    Solves ``cumulative_hazard(w + t) - cumulative_hazard(w) = -log(u)``, in
    closed form for the constant-rate, Weibull and single-phase Erlang laws
    and by bracketed bisection otherwise.

    Raises:
        DomainError: ``w`` negative or non-finite, or ``u`` not in (0, 1).
        NumericalError: the root finder failed to bracket or converge.
    """
    w = float(_elapsed(w))
    u = float(u)
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must lie in (0, 1), got {u!r}")
    t = sample_gap_kernel(*model.code, w, u)
    if math.isnan(t):
        raise NumericalError(f"inter-arrival root finding failed for {model!r}, w={w}, u={u}")
    return t


def claim_cdf(dist: ClaimDistribution, y):
    arr = np.asarray(y, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0):
        raise DomainError(f"claim size must be >= 0, got {y!r}")
    return _apply(_map_claims, 0, dist.code, arr)


def claim_quantile(dist: ClaimDistribution, u):
    arr = np.asarray(u, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"u must lie in (0, 1), got {u!r}")
    return _apply(_map_claims, 1, dist.code, arr)


def claim_sample(dist: ClaimDistribution, u):
    """Inverse-transform draw of a claim size from the uniform ``u``."""
    return claim_quantile(dist, u)


def claim_quantile_unchecked(dist: ClaimDistribution, u: np.ndarray) -> np.ndarray:
    # quadrature helper: accepts the closed interval [0, 1]
    return _map_claims(1, *dist.code, np.ascontiguousarray(u, dtype=float).ravel()).reshape(
        np.shape(u)
    )
