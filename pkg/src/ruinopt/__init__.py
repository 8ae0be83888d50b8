"""Optimal proportional reinsurance for a renewal risk model on a finite horizon.

The maximal probability of survival up to ``T`` is computed on the state
``(s, x, w)`` (time, surplus, time since the last claim) by a backward
semi-Lagrangian scheme, and checked against Monte Carlo simulation of the
controlled surplus process.
"""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    ConstantRate,
    Erlang,
    Exponential,
    Gamma,
    LogNormal,
    Weibull,
    claim_cdf,
    claim_quantile,
    claim_sample,
    cumulative_hazard,
    hazard,
    sample_interarrival,
)
from .errors import ConfigError, DomainError, NumericalError  # noqa: E402
from .hjb import (  # noqa: E402
    Diagnostics,
    Grid,
    PolicyField,
    ValueField,
    backward_step,
    build_grid,
    hjb_residual,
    interpolate_value,
    jump_value,
    solve,
)
from .model import (  # noqa: E402
    ConstantPolicy,
    ModelParams,
    State,
    TablePolicy,
    barrier,
    evaluate_policy,
    in_domain,
)
from .rng import PathStream  # noqa: E402
from .simulator import EstimateCI, PathRecord, estimate_survival, simulate_path  # noqa: E402

__all__ = [
    "__version__",
    "ConstantRate",
    "Erlang",
    "Weibull",
    "Exponential",
    "Gamma",
    "LogNormal",
    "hazard",
    "cumulative_hazard",
    "sample_interarrival",
    "claim_cdf",
    "claim_quantile",
    "claim_sample",
    "DomainError",
    "NumericalError",
    "ConfigError",
    "ModelParams",
    "State",
    "ConstantPolicy",
    "TablePolicy",
    "barrier",
    "in_domain",
    "evaluate_policy",
    "Grid",
    "ValueField",
    "PolicyField",
    "Diagnostics",
    "build_grid",
    "backward_step",
    "jump_value",
    "solve",
    "hjb_residual",
    "interpolate_value",
    "PathStream",
    "PathRecord",
    "EstimateCI",
    "simulate_path",
    "estimate_survival",
]
