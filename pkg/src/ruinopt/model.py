"""Model parameters, the solvency barrier and domain, and retention policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from ._interp import clamp_state, interp_field
from .distributions import ClaimDistribution, HazardModel
from .errors import DomainError

__all__ = [
    "ModelParams",
    "State",
    "ConstantPolicy",
    "TablePolicy",
    "Policy",
    "barrier",
    "in_domain",
    "evaluate_policy",
]


@dataclass(frozen=True)
class ModelParams:
    """Premium rate ``p``, reinsurance safety loading ``eta`` and horizon ``T``.

    The surplus under retention ``q`` drifts at ``p * (q * (1 + eta) - eta)``
    between claims and drops by ``q * U`` at a claim of size ``U``.
    """

    p: float
    eta: float
    T: float
    hazard: HazardModel
    claims: ClaimDistribution

    def __post_init__(self):
        for name in ("p", "eta", "T"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)!r}")
            object.__setattr__(self, name, value)

    @property
    def eta_p(self) -> float:
        return self.eta * self.p

    def drift(self, q):
        return self.p * (q * (1.0 + self.eta) - self.eta)


@dataclass(frozen=True)
class State:
    """Time ``s``, surplus ``x`` and time ``w`` elapsed since the last claim."""

    s: float
    x: float
    w: float


def barrier(params: ModelParams, s: float) -> float:
    """Surplus level ``eta * p * (T - s)`` from which survival to ``T`` is certain."""
    if not 0.0 <= s <= params.T:
        raise DomainError(f"s must lie in [0, T={params.T}], got {s!r}")
    return params.eta_p * (params.T - s)


def in_domain(params: ModelParams, state: State) -> bool:
    s, x, w = state.s, state.x, state.w
    if not (0.0 <= s <= params.T):
        return False
    return 0.0 <= w <= s and 0.0 <= x <= barrier(params, s)


@dataclass(frozen=True)
class ConstantPolicy:
    q: float

    def __post_init__(self):
        q = float(self.q)
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"retention must lie in [0, 1], got {self.q!r}")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True, eq=False)
class TablePolicy:
    """Retention interpolated from a tabulated argmax field.

    ``values`` uses the packed triangular layout of the solver (see
    :func:`ruinopt.hjb.build_grid`).  Queries are clamped into the closed
    domain.  Strictly above the barrier the table returns 0, the retention
    every barrier node of a solved field carries; while it is applied the
    surplus stays above the barrier and survival is certain.
    """

    values: np.ndarray
    n_s: int
    n_x: int
    T: float
    eta_p: float

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        n_rows = (self.n_s + 1) * (self.n_s + 2) // 2
        if vals.shape != (n_rows, self.n_x + 1):
            raise DomainError(
                f"table shape {vals.shape} does not match n_s={self.n_s}, n_x={self.n_x}"
            )
        object.__setattr__(self, "values", vals)

    @property
    def ds(self) -> float:
        return self.T / self.n_s

    @property
    def dx(self) -> float:
        return self.eta_p * self.T / self.n_x

    @classmethod
    def from_field(cls, field) -> "TablePolicy":
        g = field.grid
        return cls(field.values, g.n_s, g.n_x, g.T, g.eta_p)

    @classmethod
    def uniform(cls, q: float, params: ModelParams, n_s: int, n_x: int) -> "TablePolicy":
        n_rows = (n_s + 1) * (n_s + 2) // 2
        return cls(np.full((n_rows, n_x + 1), float(q)), n_s, n_x, params.T, params.eta_p)


Policy = Union[ConstantPolicy, TablePolicy]


@njit(cache=True, nogil=True)
def table_retention(vals, n_s, n_x, T, eta_p, s, x, w):
    above = x > eta_p * (T - min(max(s, 0.0), T))
    s, x, w, bar = clamp_state(T, eta_p, s, x, w)
    if above:
        return 0.0
    ds = T / n_s
    dx = eta_p * T / n_x
    q = interp_field(vals, n_s, n_x, ds, dx, s, x, w)
    return min(max(q, 0.0), 1.0)


def evaluate_policy(policy: Policy, state: State) -> float:
    """Retention level in [0, 1] prescribed by ``policy`` at ``state``."""
    if isinstance(policy, ConstantPolicy):
        return policy.q
    return float(
        table_retention(
            policy.values, policy.n_s, policy.n_x, policy.T, policy.eta_p,
            float(state.s), float(state.x), float(state.w),
        )
    )
