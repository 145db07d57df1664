"""JSON instance configuration: schema validation and conversion to instances.

Sections: ``scenario``, ``service``, ``risks``, ``utility``, ``constraints``,
``x_box``, ``policy_class``, ``slater_witness``, ``seed`` and the optional
solver section ``dual``.  Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .errors import RiskAllocError, SchemaError
from .model import PolicyClass, RCPInstance, make_instance
from .probability import make_scenario_set
from .risk import RiskSpec
from .services import service_from_config
from .utilities import Utility

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_num_or_vec = {"anyOf": [_num, _vec]}

_RISK = {
    "type": "object",
    "required": ["type"],
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["expectation", "cvar", "mad", "mean_cvar", "box_mean"]},
        "beta": _num, "lambda": _num, "theta": _num, "a": _vec, "b": _vec,
    },
}

_UTILITY = {
    "type": "object",
    "required": ["type"],
    "additionalProperties": False,
    "properties": {
        # "callback" passes the schema so it can be reported as non-concave
        "type": {"enum": ["weighted_sum", "sum_log", "min", "affine_floor", "callback"]},
        "weights": _vec, "offset": _num, "floor": _num_or_vec,
    },
}

_SERVICE = {
    "type": "object",
    "required": ["family"],
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["linear", "interference_rate", "awgn_rate", "outage_indicator", "table"]},
        "users": {"type": "integer", "minimum": 1},
        "noise": _num, "coupling": _num, "threshold": _num, "reward": _num,
        "levels": _vec, "values": {"type": "array"},
    },
}

DUAL_DEFAULTS = {"max_iters": 500, "eta0": 1.0, "method": "exhaustive", "seed": 0,
                 "refine_factor": 1, "tol": 1e-6}

SCHEMA = {
    "type": "object",
    "required": ["scenario", "service", "risks", "utility", "x_box", "policy_class"],
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "scenario": {
            "type": "object",
            "required": ["points", "weights"],
            "additionalProperties": False,
            "properties": {
                "points": {"type": "array", "minItems": 1,
                           "items": {"anyOf": [_num, _vec]}},
                "weights": _vec,
            },
        },
        "service": _SERVICE,
        "risks": {"anyOf": [_RISK, {"type": "array", "items": _RISK, "minItems": 1}]},
        "utility": _UTILITY,
        "constraints": {"type": "array", "items": _UTILITY},
        "x_box": {
            "type": "object",
            "required": ["lower", "upper"],
            "additionalProperties": False,
            "properties": {"lower": _num_or_vec, "upper": _num_or_vec},
        },
        "policy_class": {
            "type": "object",
            "required": ["kind", "upper"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["uniform_box", "rectangular_box", "per_scenario_budget"]},
                "upper": _num_or_vec, "lower": _num_or_vec,
                "resolution": {"type": "integer", "minimum": 2},
                "budget": _num, "slope": _num,
            },
        },
        "slater_witness": {
            "type": "object",
            "required": ["x", "policy"],
            "additionalProperties": False,
            "properties": {
                "x": _num_or_vec,
                "policy": {"anyOf": [_num, _vec, {"type": "array", "items": _num_or_vec}]},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "dual": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "eta0": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["exhaustive", "coordinate", "minimax"]},
                "seed": {"type": "integer", "minimum": 0},
                "refine_factor": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "minimum": 0},
            },
        },
    },
}


@dataclass(frozen=True)
class DualOptions:
    max_iters: int = 500
    eta0: float = 1.0
    method: str = "exhaustive"
    seed: int = 0
    refine_factor: int = 1
    tol: float = 1e-6


def validate(config: Mapping[str, Any]) -> None:
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from None


def build_instance(config: Mapping[str, Any], verify_slater: bool = True) -> RCPInstance:
    """Validate a config mapping and build the instance (Slater included unless disabled)."""
    validate(config)
    sc = config["scenario"]
    S = make_scenario_set(sc["points"], sc["weights"])
    service_cfg = dict(config["service"])
    if service_cfg["family"] != "table" and "users" not in service_cfg:
        service_cfg["users"] = S.dim
    try:
        service = service_from_config(service_cfg)
        if service_cfg["family"] != "table" and service.n_out != S.dim:
            raise SchemaError(f"service has {service.n_out} users but scenario points have "
                              f"dimension {S.dim}")
        risks_cfg = config["risks"]
        if isinstance(risks_cfg, Mapping):
            risks = [RiskSpec.from_config(risks_cfg)] * service.n_out
        else:
            risks = [RiskSpec.from_config(r) for r in risks_cfg]
        objective = Utility.from_config(config["utility"])
        constraints = [Utility.from_config(g) for g in config.get("constraints", [])]
        pc = dict(config["policy_class"])
        policy_class = PolicyClass(**pc)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"incomplete configuration: {exc}") from exc
    wcfg = config.get("slater_witness")
    witness = None if wcfg is None else (wcfg["x"], wcfg["policy"])
    return make_instance(S, service, risks, objective, config["x_box"]["lower"],
                         config["x_box"]["upper"], policy_class, constraints,
                         witness=witness, seed=config.get("seed", 0),
                         verify_slater=verify_slater)


def dual_options(config: Mapping[str, Any]) -> DualOptions:
    merged = {**DUAL_DEFAULTS, **config.get("dual", {})}
    return DualOptions(**merged)


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config {path} is not valid JSON: {exc}") from exc
    validate(cfg)
    return cfg


def instance_to_config(inst: RCPInstance) -> dict:
    """Inverse of :func:`build_instance` for config-expressible instances."""
    cfg: dict[str, Any] = {
        "scenario": {"points": inst.scenarios.points.tolist(),
                     "weights": inst.scenarios.weights.tolist()},
        "service": inst.service.to_config(),
        "risks": [r.to_config() for r in inst.risks],
        "utility": inst.objective.to_config(),
        "constraints": [g.to_config() for g in inst.constraints],
        "x_box": {"lower": inst.x_lower.tolist(), "upper": inst.x_upper.tolist()},
        "policy_class": inst.policy_class.to_config(),
        "seed": inst.seed,
    }
    if inst.witness is not None:
        cfg["slater_witness"] = {"x": inst.witness.x.tolist(),
                                 "policy": inst.witness.policy.tolist()}
    return cfg


__all__ = ["SCHEMA", "DualOptions", "build_instance", "dual_options", "load_config",
           "instance_to_config", "validate", "RiskAllocError"]
