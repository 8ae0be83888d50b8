"""INI run configuration: parsing, validation, canonical rendering and hashing.

Sections and keys (all optional except ``[model]``)::

    [model]     p, eta, T, hazard = constant(rate=1), claims = exponential(mean=1)
    [solver]    n_s, n_x, n_q, n_quad
    [simulate]  n_paths, seed, points = "s x w; s x w", policy = table | constant(q=0.5),
                table_file, dump_paths, substeps
    [validate]  n_paths, seed, points, dpp_point, dpp_h, eps_grid, continuity
    [output]    directory, formats = csv, json

Unknown sections and keys are errors that name the offender.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import re
from dataclasses import dataclass, field

from .distributions import ConstantRate, Erlang, Exponential, Gamma, LogNormal, Weibull
from .errors import ConfigError, DomainError
from .model import ConstantPolicy, ModelParams

__all__ = [
    "RunConfig",
    "SolverConfig",
    "SimulateConfig",
    "ValidateConfig",
    "OutputConfig",
    "parse_config",
    "load_config",
    "render_config",
    "config_hash",
    "parse_law",
    "render_law",
    "with_override",
]

HAZARDS = {"constant": ConstantRate, "erlang": Erlang, "weibull": Weibull}
CLAIMS = {"exponential": Exponential, "gamma": Gamma, "lognormal": LogNormal}
FORMATS = ("csv", "json")

Point = tuple[float, float, float]


@dataclass(frozen=True)
class SolverConfig:
    n_s: int = 200
    n_x: int = 200
    n_q: int = 21
    n_quad: int = 64


@dataclass(frozen=True)
class SimulateConfig:
    n_paths: int = 100_000
    seed: int = 0
    points: tuple[Point, ...] = ((0.0, 0.0, 0.0),)
    policy: str = "table"
    table_file: str = ""
    dump_paths: int = 0
    substeps: int = 1


@dataclass(frozen=True)
class ValidateConfig:
    n_paths: int = 100_000
    seed: int = 0
    points: tuple[Point, ...] = ()
    dpp_point: Point | None = None
    dpp_h: tuple[float, ...] = (0.25, 0.5, 1.0)
    eps_grid: float = 2e-2
    continuity: bool = True


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple[str, ...] = FORMATS


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def hash(self) -> str:
        return config_hash(self)


# --------------------------------------------------------------------------
# Law and value parsers

_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def _call(text: str, what: str) -> tuple[str, dict[str, float]]:
    m = _CALL.match(text)
    if not m:
        raise ConfigError(f"{what}: cannot parse {text!r}; expected name(key=value, ...)")
    name, body = m.group(1).lower(), (m.group(2) or "").strip()
    kwargs: dict[str, float] = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise ConfigError(f"{what}: argument {part!r} must be written key=value")
        kwargs[key.strip()] = _float(value, f"{what}.{key.strip()}")
    return name, kwargs


def parse_law(text: str, table: dict, what: str):
    """Build a distribution from ``name(key=value, ...)`` using the variants in ``table``."""
    name, kwargs = _call(text, what)
    if name not in table:
        raise ConfigError(f"{what}: unknown law {name!r}; choose from {', '.join(sorted(table))}")
    cls = table[name]
    known = {f.name for f in dataclasses.fields(cls)}
    for key in kwargs:
        if key not in known:
            raise ConfigError(f"{what}: unknown parameter {key!r} for {name}")
    missing = known - set(kwargs)
    if missing:
        raise ConfigError(f"{what}: {name} needs {', '.join(sorted(missing))}")
    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def render_law(law) -> str:
    for table in (HAZARDS, CLAIMS):
        for name, cls in table.items():
            if type(law) is cls:
                args = ", ".join(f"{f.name}={getattr(law, f.name)!r}" for f in dataclasses.fields(cls))
                return f"{name}({args})"
    raise TypeError(f"unsupported law {law!r}")


def parse_policy(text: str):
    """``table`` or ``constant(q=...)``; returns the string ``"table"`` or a :class:`ConstantPolicy`."""
    name, kwargs = _call(text, "policy")
    if name == "table" and not kwargs:
        return "table"
    if name == "constant" and set(kwargs) == {"q"}:
        try:
            return ConstantPolicy(kwargs["q"])
        except DomainError as exc:
            raise ConfigError(f"policy: {exc}") from None
    raise ConfigError(f"policy: expected 'table' or 'constant(q=...)', got {text!r}")


def _float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text.strip()!r}") from None


def _int(text: str, key: str, low: int = 0) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text.strip()!r}") from None
    if value < low:
        raise ConfigError(f"{key} must be >= {low}, got {value}")
    return value


def _even(value: int, key: str) -> int:
    if value % 2:
        raise ConfigError(f"{key} must be even, got {value}")
    return value


def _bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text.strip()!r}")


def _point(text: str, key: str) -> Point:
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ConfigError(f"{key}: a point needs three numbers 's x w', got {text.strip()!r}")
    s, x, w = (_float(p, key) for p in parts)
    return (s, x, w)


def _points(text: str, key: str) -> tuple[Point, ...]:
    return tuple(_point(chunk, key) for chunk in text.split(";") if chunk.strip())


def _floats(text: str, key: str) -> tuple[float, ...]:
    return tuple(_float(v, key) for v in text.replace(",", " ").split())


def _formats(text: str, key: str) -> tuple[str, ...]:
    out = tuple(v.strip().lower() for v in text.split(",") if v.strip())
    for v in out:
        if v not in FORMATS:
            raise ConfigError(f"{key}: unknown format {v!r}; choose from {', '.join(FORMATS)}")
    return out


# --------------------------------------------------------------------------
# Sections

_MODEL_KEYS = {"p", "eta", "T", "hazard", "claims"}

_SECTIONS = {
    "solver": (SolverConfig, {
        "n_s": lambda v, k: _int(v, k, 2),
        "n_x": lambda v, k: _int(v, k, 2),
        "n_q": lambda v, k: _int(v, k, 2),
        "n_quad": lambda v, k: _even(_int(v, k, 2), k),
    }),
    "simulate": (SimulateConfig, {
        "n_paths": lambda v, k: _int(v, k, 1),
        "seed": _int,
        "points": _points,
        "policy": lambda v, k: (parse_policy(v), v.strip())[1],
        "table_file": lambda v, k: v.strip(),
        "dump_paths": _int,
        "substeps": lambda v, k: _int(v, k, 1),
    }),
    "validate": (ValidateConfig, {
        "n_paths": _int,
        "seed": _int,
        "points": _points,
        "dpp_point": lambda v, k: _point(v, k) if v.strip() else None,
        "dpp_h": _floats,
        "eps_grid": _float,
        "continuity": _bool,
    }),
    "output": (OutputConfig, {
        "directory": lambda v, k: v.strip(),
        "formats": _formats,
    }),
}


def _model(section) -> ModelParams:
    for key in section:
        if key not in _MODEL_KEYS:
            raise ConfigError(f"unknown key {key!r} in [model]")
    for key in ("p", "eta", "T"):
        if key not in section:
            raise ConfigError(f"[model] is missing required key {key!r}")
    hazard = parse_law(section.get("hazard", "constant(rate=1)"), HAZARDS, "hazard")
    claims = parse_law(section.get("claims", "exponential(mean=1)"), CLAIMS, "claims")
    values = {k: _float(section[k], k) for k in ("p", "eta", "T")}
    try:
        return ModelParams(values["p"], values["eta"], values["T"], hazard, claims)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate an INI document; see the module docstring for the schema."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for name in parser.sections():
        if name != "model" and name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
    if not parser.has_section("model"):
        raise ConfigError("config needs a [model] section")
    built = {"model": _model(parser["model"])}
    for name, (cls, fields) in _SECTIONS.items():
        kwargs = {}
        if parser.has_section(name):
            for key, raw in parser[name].items():
                if key not in fields:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                kwargs[key] = fields[key](raw, key)
        built[name] = cls(**kwargs)
    return RunConfig(**built)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(_fmt(p) for p in v)
    if isinstance(v, tuple):
        return " ".join(_fmt(c) for c in v)
    return str(v)


def render_config(config: RunConfig) -> str:
    """Canonical INI text: every key spelled out, floats in round-trip form."""
    m = config.model
    lines = [
        "[model]",
        f"p = {m.p!r}",
        f"eta = {m.eta!r}",
        f"T = {m.T!r}",
        f"hazard = {render_law(m.hazard)}",
        f"claims = {render_law(m.claims)}",
    ]
    for name in _SECTIONS:
        block = getattr(config, name)
        lines += ["", f"[{name}]"]
        for f in dataclasses.fields(block):
            value = getattr(block, f.name)
            if f.name == "formats":
                rendered = ", ".join(value)
            else:
                rendered = "" if value is None else _fmt(value)
            lines.append(f"{f.name} = {rendered}".rstrip())
    return "\n".join(lines) + "\n"


def config_hash(config: RunConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical rendering."""
    return hashlib.sha256(render_config(config).encode()).hexdigest()[:16]


def with_override(config: RunConfig, axis: str, value: float) -> RunConfig:
    """Copy of ``config`` with one model quantity replaced.

    ``axis`` is ``p``, ``eta``, ``T``, or ``hazard.<param>`` / ``claims.<param>``.
    """
    m = config.model
    try:
        if axis in ("p", "eta", "T"):
            model = dataclasses.replace(m, **{axis: value})
        elif axis.startswith(("hazard.", "claims.")):
            part, param = axis.split(".", 1)
            law = getattr(m, part)
            if param not in {f.name for f in dataclasses.fields(law)}:
                raise ConfigError(f"unknown sweep axis {axis!r}: {type(law).__name__} has no {param!r}")
            model = dataclasses.replace(m, **{part: dataclasses.replace(law, **{param: value})})
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}; use p, eta, T, hazard.<param> or claims.<param>")
    except DomainError as exc:
        raise ConfigError(f"{axis}={value!r}: {exc}") from None
    return dataclasses.replace(config, model=model)
