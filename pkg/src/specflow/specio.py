"""Family specification files: schema, validation and construction."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema

from .families import DEFAULT_CLUSTER_TOL, GENERATORS, OperatorFamily
from .spaces import ParameterComplex, build_general, build_loop, build_path, build_sphere_grid


class SpecError(ValueError):
    """A specification file that cannot be used as written."""


_NUM = {"type": "number"}
_INT = {"type": "integer"}

SPEC_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "space", "generator"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": "1"},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "space": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["loop", "sphere_grid", "path", "general"]},
                "parameters": {"type": "object"},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "loop"}}},
                 "then": {"properties": {"parameters": {
                     "type": "object", "required": ["N"], "additionalProperties": False,
                     "properties": {"N": {"type": "integer", "minimum": 3}}}},
                     "required": ["parameters"]}},
                {"if": {"properties": {"kind": {"const": "sphere_grid"}}},
                 "then": {"properties": {"parameters": {
                     "type": "object", "required": ["n_theta", "n_phi"], "additionalProperties": False,
                     "properties": {"n_theta": {"type": "integer", "minimum": 4},
                                    "n_phi": {"type": "integer", "minimum": 4}}}},
                     "required": ["parameters"]}},
                {"if": {"properties": {"kind": {"const": "path"}}},
                 "then": {"properties": {"parameters": {
                     "type": "object", "required": ["N"], "additionalProperties": False,
                     "properties": {"N": {"type": "integer", "minimum": 2}, "lo": _NUM, "hi": _NUM}}},
                     "required": ["parameters"]}},
                {"if": {"properties": {"kind": {"const": "general"}}},
                 "then": {"properties": {"parameters": {
                     "type": "object", "required": ["simplices"],
                     "properties": {"vertices": {"type": "array"}, "simplices": {"type": "array"}}}},
                     "required": ["parameters"]}},
            ],
        },
        "generator": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": sorted(GENERATORS)},
                "parameters": {"type": "object"},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "cluster_tol": {"type": "number", "exclusiveMinimum": 0},
                "level": _NUM,
                "pair": _INT,
                "refine": {"type": "boolean"},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SPEC_SCHEMA)


def validate_spec(doc: Any) -> dict:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SpecError(f"field {where}: {err.message}")
    window = doc.get("analysis", {}).get("window")
    if window is not None and not window[0] < window[1]:
        raise SpecError("field analysis/window: lo must be below hi")
    return doc


def load_spec(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return validate_spec(doc)


def build_space(spec: dict) -> ParameterComplex:
    kind = spec["space"]["kind"]
    p = spec["space"].get("parameters", {})
    if kind == "loop":
        return build_loop(p["N"])
    if kind == "sphere_grid":
        return build_sphere_grid(p["n_theta"], p["n_phi"])
    if kind == "path":
        return build_path(p["N"], p.get("lo", -1.0), p.get("hi", 1.0))
    return build_general(p)


def build_family(spec: dict, base_dir: str | Path | None = None) -> OperatorFamily:
    space = build_space(spec)
    gen = spec["generator"]
    params = dict(gen.get("parameters", {}))
    if gen["name"] == "custom_table":
        params.setdefault("base_dir", base_dir)
    try:
        return GENERATORS[gen["name"]](space, **params)
    except TypeError as exc:
        raise SpecError(f"field generator/parameters: {exc}") from exc


def analysis_options(spec: dict) -> dict:
    a = spec.get("analysis", {})
    return {
        "window": tuple(a["window"]) if "window" in a else None,
        "cluster_tol": a.get("cluster_tol", DEFAULT_CLUSTER_TOL),
        "level": a.get("level", 0.0),
        "pair": a.get("pair", 0),
        "refine": a.get("refine", False),
    }
