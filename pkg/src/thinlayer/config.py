"""Experiment configuration: JSON schema, loading and conversion to run objects.

Every config carries ``"schema_version": 1``.  Unknown keys are rejected, and
each error names the offending key path (for example ``sweep.eps[2]``).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ConfigError
from .gamma import PROFILES, FluxFamily, SourceFamily, SweepConfig
from .geometry import EDGES, Chart, make_chart

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_grid = {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 2, "maxItems": 2}
_profile = {"type": "string", "enum": sorted(PROFILES)}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


# amp * profile(x) + offset
_field = _obj({"profile": _profile, "amp": _num, "offset": _num}, ["profile"])
_source = _obj({"profile": _profile, "amp": _num,
                "t_poly": {"type": "array", "items": _num, "minItems": 1}}, ["profile"])
_flux = _obj({"profile": _profile, "amp": _num, "odd": _num, "power": _pos, "even": _num},
             ["profile"])
_eps_list = {"type": "array", "items": _pos, "minItems": 3}

SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "description": {"type": "string"},
    "chart": _obj({
        "name": {"type": "string", "enum": ["plane", "sphere_cap", "cylinder", "torus"]},
        "params": {"type": "object"},
        "grid": _grid,
    }, ["name", "grid"]),
    "geometry": _obj({
        "grids": {"type": "array", "items": _grid, "minItems": 1},
        "expected": _obj({"H0": _num, "H": _num, "G": _num}, ["H0", "H", "G"]),
        "rel_tol": _pos,
        "order_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    }),
    "identities": _obj({
        "tol": _pos, "exact_tol": _pos,
        "n_fields": {"type": "integer", "minimum": 1},
        "degree": {"type": "integer", "minimum": 1, "maximum": 6},
    }),
    "surface": _obj({
        "source": _field,
        "dirichlet_value": _field,
        "neumann_value": _field,
        "dirichlet_edges": {"type": "array", "items": {"enum": list(EDGES)}, "uniqueItems": True},
        "anisotropy": {"type": "array", "minItems": 3, "maxItems": 3,
                       "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
        "exact": _field,
        "tol": _pos,
    }, ["source"]),
    "layer": _obj({
        "eps": _pos,
        "n_t": {"type": "integer", "minimum": 4},
        "source": _source,
        "flux": _flux,
    }, ["eps"]),
    "sweep": _obj({
        "eps": _eps_list,
        "n_t": {"type": "integer", "minimum": 4},
        "source": _source,
        "flux": _flux,
        "exact_limit": _field,
        "tol": _pos,
        "jitter": {"type": "number", "minimum": 0},
    }, ["eps"]),
    "lebesgue": _obj({
        "eps": _eps_list,
        "family": {"enum": ["counterexample", "smooth"]},
        "source": _source,
        "slack": {"type": "number", "minimum": 0},
    }, ["eps", "family"]),
}, ["schema_version", "chart"])

_VALIDATOR = Draft202012Validator(SCHEMA)


def _key_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate(data: dict) -> dict:
    """Schema check; raises ConfigError for the first error in document order."""
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise ConfigError(_key_path(err.absolute_path), err.message)
    sweep = data.get("sweep")
    if sweep:
        eps = sweep["eps"]
        for i in range(1, len(eps)):
            if eps[i] >= eps[i - 1]:
                raise ConfigError(f"sweep.eps[{i}]", "eps list must be strictly decreasing")
    for sec in ("layer", "sweep"):
        if sec in data and data[sec].get("n_t", 8) % 2:
            raise ConfigError(f"{sec}.n_t", "must be even so that tau = 0 is a node plane")
    return data


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"config file {str(path)!r} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return validate(data)


# ---------------------------------------------------------------------------
# conversion

def build_chart(data: dict, grid=None) -> Chart:
    spec = data["chart"]
    try:
        return make_chart(spec["name"], spec.get("params", {}), tuple(grid or spec["grid"]))
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError("chart.params", str(exc)) from None


def field_function(spec: dict | None):
    """``x -> amp * profile(x) + offset``; ``None`` gives the zero field."""
    if spec is None:
        return lambda x: np.zeros(np.asarray(x).shape[:-1])
    prof = PROFILES[spec["profile"]]
    amp = float(spec.get("amp", 1.0))
    off = float(spec.get("offset", 0.0))
    return lambda x: amp * prof(np.asarray(x, float)) + off


def source_family(spec: dict | None) -> SourceFamily:
    if spec is None:
        return SourceFamily()
    return SourceFamily(spec["profile"], float(spec.get("amp", 1.0)),
                        tuple(float(c) for c in spec.get("t_poly", [1.0])))


def flux_family(spec: dict | None) -> FluxFamily:
    if spec is None:
        return FluxFamily()
    return FluxFamily(spec["profile"], float(spec.get("amp", 1.0)), float(spec.get("odd", 1.0)),
                      float(spec.get("power", 1.0)), float(spec.get("even", 0.0)))


def sweep_config(data: dict, jobs: int = 1, tol: float | None = None) -> SweepConfig:
    if "sweep" not in data:
        raise ConfigError("sweep", "section is required for this command")
    sw = data["sweep"]
    exact = sw.get("exact_limit")
    return SweepConfig(
        chart=build_chart(data),
        eps=[float(e) for e in sw["eps"]],
        n_t=int(sw.get("n_t", 8)),
        source=source_family(sw.get("source")),
        flux=flux_family(sw.get("flux")),
        exact_limit=field_function(exact) if exact else None,
        tol=float(tol if tol is not None else sw.get("tol", 1e-2)),
        jitter=float(sw.get("jitter", 0.05)),
        jobs=int(jobs),
        echo=data,
    )
