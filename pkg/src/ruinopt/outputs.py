"""Stable on-disk formats: value/policy CSV, simulation summaries, JSON reports.

Every file starts with one header line ``# ruinopt <version> config=<hash> ...``.
Floats are written with 17 significant digits so tables round-trip exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .errors import ConfigError
from .hjb import Diagnostics, Grid, PolicyField, ValueField
from .model import TablePolicy
from .simulator import EstimateCI

__all__ = [
    "header_line",
    "read_header",
    "write_value_csv",
    "read_value_csv",
    "write_summary_csv",
    "write_json",
    "diagnostics_dict",
]

VALUE_COLUMNS = "s,x,w,V,q_star"
SUMMARY_COLUMNS = "s,x,w,policy,mean,std_error,n_paths,seed"


def header_line(config_hash: str, **meta) -> str:
    extra = "".join(f" {k}={v}" for k, v in meta.items())
    return f"# ruinopt {__version__} config={config_hash}{extra}"


def read_header(line: str) -> dict[str, str]:
    """Key/value pairs of a header line (``version`` plus every ``key=value`` token)."""
    tokens = line.lstrip("#").split()
    if len(tokens) < 2 or tokens[0] != "ruinopt":
        raise ConfigError(f"not a ruinopt header line: {line.strip()!r}")
    out = {"version": tokens[1]}
    for tok in tokens[2:]:
        key, _, value = tok.partition("=")
        out[key] = value
    return out


def _g(v: float) -> str:
    return format(float(v), ".17g")


def write_value_csv(path, V: ValueField, Q: PolicyField, config_hash: str) -> Path:
    """Nodes in lexicographic ``(i, j, k)`` order with columns ``s,x,w,V,q_star``."""
    g = V.grid
    path = Path(path)
    j = np.arange(g.n_x + 1)
    with open(path, "w", newline="") as fh:
        fh.write(header_line(config_hash, n_s=g.n_s, n_x=g.n_x, T=repr(g.T), eta_p=repr(g.eta_p)) + "\n")
        fh.write(VALUE_COLUMNS + "\n")
        for i in range(g.n_s + 1):
            k = np.arange(i + 1)
            jj, kk = np.meshgrid(j, k, indexing="ij")
            block = np.column_stack([
                np.full(jj.size, i * g.ds),
                (jj * g.dx).ravel(),
                (kk * g.ds).ravel(),
                V.slice(i).ravel(),
                Q.slice(i).ravel(),
            ])
            fh.write("".join("%.17g,%.17g,%.17g,%.17g,%.17g\n" % tuple(r) for r in block.tolist()))
    return path


def read_value_csv(path) -> tuple[ValueField, TablePolicy]:
    """Inverse of :func:`write_value_csv`: the value field and the table policy it carries."""
    path = Path(path)
    with open(path) as fh:
        meta = read_header(fh.readline())
        cols = fh.readline().strip()
        if cols != VALUE_COLUMNS:
            raise ConfigError(f"{path}: expected columns {VALUE_COLUMNS!r}, got {cols!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    try:
        n_s, n_x = int(meta["n_s"]), int(meta["n_x"])
        T, eta_p = float(meta["T"]), float(meta["eta_p"])
    except KeyError as exc:
        raise ConfigError(f"{path}: header lacks grid field {exc}") from None
    grid = Grid(n_s, n_x, T, eta_p)
    if data.shape != (grid.node_count, 5):
        raise ConfigError(f"{path}: {data.shape[0]} rows do not match n_s={n_s}, n_x={n_x}")
    values = np.empty((grid.n_rows, n_x + 1))
    q = np.empty_like(values)
    start = 0
    for i in range(n_s + 1):
        size = (n_x + 1) * (i + 1)
        block = data[start:start + size]
        values[grid.rows(i)] = block[:, 3].reshape(n_x + 1, i + 1).T
        q[grid.rows(i)] = block[:, 4].reshape(n_x + 1, i + 1).T
        start += size
    return ValueField(grid, values), TablePolicy(q, n_s, n_x, T, eta_p)


def write_summary_csv(path, rows: Iterable[tuple[tuple[float, float, float], str, EstimateCI]], config_hash: str) -> Path:
    """One line per initial state: ``s,x,w,policy,mean,std_error,n_paths,seed``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(header_line(config_hash) + "\n")
        fh.write(SUMMARY_COLUMNS + "\n")
        for (s, x, w), label, est in rows:
            fh.write(",".join([
                _g(s), _g(x), _g(w), label, _g(est.mean), _g(est.std_error), str(est.n_paths), str(est.seed),
            ]) + "\n")
    return path


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, payload: dict, config_hash: str) -> Path:
    """JSON document whose first key is the header line."""
    path = Path(path)
    doc = {"header": header_line(config_hash)}
    doc.update(_clean(payload))
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")
    return path


def diagnostics_dict(diag: Diagnostics, V: ValueField) -> dict:
    """Solver diagnostics without wall-clock time, so the file is reproducible."""
    g = V.grid
    return {
        "n_s": g.n_s,
        "n_x": g.n_x,
        "n_q": diag.n_q,
        "n_quad": diag.n_quad,
        "node_count": diag.node_count,
        "max_monotonicity_violation": diag.max_monotonicity_violation,
        "V_min": float(V.values.min()),
        "V_origin": float(V[0, 0, 0]),
    }
