"""Run configuration: JSON schema validation and dataclass views."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FLOW_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["euclidean", "shrinking_sphere", "shrinking_cylinder",
                          "rotsym"]},
        "n": {"type": "integer", "minimum": 2},
        "T": {"type": "number"},
        "t_cap": {"type": "number", "exclusiveMinimum": 0},
        "profile": {"enum": ["round", "dumbbell"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho0": {"type": "number", "exclusiveMinimum": 0},
                "neck": {"type": "number", "exclusiveMinimum": 0,
                         "exclusiveMaximum": 1},
            },
        },
        "nodes": {"type": "integer", "minimum": 41},
        "t_end": {"type": "number"},
        "blowup_threshold": {"type": "number", "exclusiveMinimum": 0},
        "snapshot": {"type": "string"},
    },
}

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 8}
_NUMLIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["shoot", "min", "field", "volume", "monotone",
                          "identities", "scan", "balls", "lipschitz",
                          "solve_rotsym"]},
        "base": _POINT,
        "time": {"type": "number"},
        "v": _POINT,
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "taus": _NUMLIST,
        "steps": {"type": "integer", "minimum": 16},
        "target": _POINT,
        "target_time": {"type": "number"},
        "nodes": {"oneOf": [{"type": "integer", "minimum": 2},
                            {"type": "array", "items": {"type": "integer",
                                                        "minimum": 2},
                             "minItems": 1, "maxItems": 3}]},
        "radius_sigmas": {"type": "number", "exclusiveMinimum": 0},
        "method": {"enum": ["domain", "pushforward", "both"]},
        "bases": {"type": "array", "items": _POINT, "minItems": 1},
        "times": _NUMLIST,
        "r_list": _NUMLIST,
        "r_cap": {"type": "number", "exclusiveMinimum": 0},
        "r_primes": _NUMLIST,
        "center": _POINT,
        "center_time": {"type": "number"},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "n_starts": {"type": "integer", "minimum": 1},
        "certify": {"enum": ["off", "sampled", "full"]},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["flow", "experiment"],
    "properties": {
        "flow": FLOW_SCHEMA,
        "experiment": EXPERIMENT_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
}

_REQUIRED_BY_KIND = {
    "shoot": ["base", "time", "v", "tau"],
    "min": ["base", "time", "target", "target_time"],
    "field": ["base", "time", "tau"],
    "volume": ["base", "time", "tau"],
    "monotone": ["base", "time", "taus"],
    "identities": ["base", "time", "tau"],
    "scan": ["bases", "times", "r_list"],
    "balls": ["base", "time", "r_primes"],
    "lipschitz": ["base", "time", "center", "center_time", "r"],
    "solve_rotsym": [],
}


@dataclass
class ValidationIssue:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


def validate_config(cfg: dict) -> list:
    """Schema diagnostics (empty list means valid)."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    issues = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: str(e.json_path)):
        path = err.json_path.replace("$", "") or "."
        issues.append(ValidationIssue(path=path or ".", message=err.message))
    if issues:
        return issues
    kind = cfg["experiment"]["kind"]
    for key in _REQUIRED_BY_KIND[kind]:
        if key not in cfg["experiment"]:
            issues.append(ValidationIssue(
                path=f".experiment.{key}",
                message=f"required for experiment kind {kind!r}"))
    if kind == "solve_rotsym" and cfg["flow"]["kind"] != "rotsym":
        issues.append(ValidationIssue(
            path=".flow.kind", message="solve_rotsym needs a rotsym flow"))
    return issues


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(cfg: dict) -> str:
    import hashlib

    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
