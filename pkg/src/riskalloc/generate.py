"""Seeded instance generators producing JSON-ready configs.

Channel gains are exponential (Rayleigh power fading) with a per-user mean,
atoms carry equal weight, and each generator supplies an explicit Slater
witness built from a policy whose risk vector is strictly positive.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .errors import SchemaError, SlaterNotVerified
from .risk import RiskSpec

MAX_DRAWS = 100

FAMILIES = ("interference2", "interference3", "outage", "concave-awgn", "random-table")

DEFAULT_RISK = {
    "interference2": {"type": "cvar", "beta": 0.5},
    "interference3": {"type": "cvar", "beta": 0.5},
    "outage": {"type": "expectation"},
    "concave-awgn": {"type": "expectation"},
    "random-table": {"type": "mad", "lambda": 0.5},
}


def _gains(rng: np.random.Generator, K: int, users: int, mean: float, floor: float = 0.05
           ) -> np.ndarray:
    return np.round(rng.exponential(mean, size=(K, users)) + floor, 6)


def generate(family: str, scenarios: int = 8, seed: int = 0, risk: dict | None = None,
             resolution: int = 2) -> dict[str, Any]:
    """Config dict for a seeded random instance of ``family``.

    Draws that admit no strictly feasible point are discarded and redrawn from
    the same generator stream, so the result is still a function of ``seed``.
    """
    if family not in FAMILIES:
        raise SchemaError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if scenarios < 1:
        raise SchemaError("need at least one scenario")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_DRAWS):
        try:
            return _draw(family, int(scenarios), seed, rng, risk, resolution)
        except SlaterNotVerified:
            continue
    raise SlaterNotVerified(f"no strictly feasible {family} instance in {MAX_DRAWS} draws")


def _draw(family: str, scenarios: int, seed: int, rng: np.random.Generator,
          risk: dict | None, resolution: int) -> dict[str, Any]:
    K = int(scenarios)
    risk = dict(DEFAULT_RISK[family] if risk is None else risk)
    RiskSpec.from_config(risk)  # validate early
    weights = [1.0 / K] * K
    cfg: dict[str, Any]
    if family in ("interference2", "interference3"):
        users = 2 if family == "interference2" else 3
        H = _gains(rng, K, users, 2.0)
        cfg = {
            "service": {"family": "interference_rate", "users": users, "noise": 1.0,
                        "coupling": 1.0},
            "utility": {"type": "sum_log", "offset": 0.5},
            "x_box": {"lower": 0.0, "upper": 4.0},
            "policy_class": {"kind": "uniform_box", "upper": [4.0] * users, "resolution": resolution},
        }
    elif family == "outage":
        users = 2
        H = _gains(rng, K, users, 2.0, floor=0.3)
        weights = _dirichlet_weights(rng, K)
        cfg = {
            "service": {"family": "outage_indicator", "users": users, "threshold": 2.0,
                        "reward": 1.0, "noise": 1.0, "coupling": 0.5},
            "utility": {"type": "sum_log", "offset": 0.1},
            "x_box": {"lower": 0.0, "upper": 1.0},
            "policy_class": {"kind": "uniform_box", "upper": [4.0] * users, "resolution": resolution},
        }
    elif family == "concave-awgn":
        users = 2
        H = _gains(rng, K, users, 1.0)
        cfg = {
            "service": {"family": "awgn_rate", "users": users, "noise": 1.0},
            "utility": {"type": "sum_log", "offset": 0.5},
            "x_box": {"lower": 0.0, "upper": 4.0},
            "policy_class": {"kind": "per_scenario_budget", "upper": [2.0, 2.0], "budget": 2.0,
                             "resolution": max(resolution, 5)},
        }
    else:
        users = 2
        labels = rng.integers(0, 3, size=K)
        H = labels[:, None].astype(float)
        levels = np.linspace(0.0, 1.0, max(resolution, 3))
        values = np.round(rng.uniform(0.0, 2.0, size=(3, levels.size, users)), 6)
        values[:, -1, :] = values[:, -1, :] + 0.1  # top level serves everyone a little
        cfg = {
            "service": {"family": "table", "levels": levels.tolist(), "values": values.tolist()},
            "utility": {"type": "weighted_sum",
                        "weights": np.round(rng.uniform(0.5, 1.5, users), 6).tolist()},
            "x_box": {"lower": 0.0, "upper": 2.0},
            "policy_class": {"kind": "uniform_box", "upper": 1.0, "resolution": levels.size},
        }
        cfg["scenario"] = {"points": H.tolist(), "weights": weights}
        cfg["risks"] = risk
        cfg["seed"] = int(seed)
        return _finish(cfg, [[1.0]] * K)
    cfg["scenario"] = {"points": H.tolist(), "weights": weights}
    cfg["risks"] = risk
    cfg["seed"] = int(seed)
    top = np.asarray(cfg["policy_class"]["upper"], dtype=float).reshape(-1)
    if cfg["policy_class"]["kind"] == "per_scenario_budget":
        top = np.full(users, cfg["policy_class"]["budget"] / users)
    elif top.size == 1:
        top = np.full(users, top[0])
    if family == "outage":
        pol = _alternating(K, users, top)
    else:
        pol = np.tile(top, (K, 1)).tolist()
    return _finish(cfg, pol)


def _dirichlet_weights(rng: np.random.Generator, K: int) -> list[float]:
    w = np.round(rng.dirichlet(np.full(K, 2.0)), 6)
    w = np.maximum(w, 1e-3)
    w[-1] = 0.0
    w[-1] = 1.0 - float(np.sum(w))
    return w.tolist()


def _alternating(K: int, users: int, top: np.ndarray) -> list[list[float]]:
    # serve one user per atom in turn; avoids mutual interference outages
    rows = []
    for k in range(K):
        row = [0.0] * users
        row[k % users] = float(top[k % users])
        rows.append(row)
    return rows


def _finish(cfg: dict[str, Any], pol) -> dict[str, Any]:
    """Attach a witness ``(x = r(pol) / 2, pol)`` when that is strictly feasible."""
    from .config import build_instance

    bare = {k: v for k, v in cfg.items() if k != "slater_witness"}
    inst = build_instance(bare, verify_slater=False)
    r = inst.risk_vector(pol)
    x = np.clip(0.5 * r, inst.x_lower, inst.x_upper)
    if float(np.min(r - x)) >= 1e-3:
        cfg["slater_witness"] = {"x": x.tolist(), "policy": [list(map(float, row)) for row in pol]}
    else:
        # let the random probe look for a witness (raises if there is none)
        w = build_instance(bare).witness
        cfg["slater_witness"] = {"x": w.x.tolist(), "policy": w.policy.tolist()}
    return cfg
