"""Closed family of concave, nondecreasing utilities on the service box.

Utilities are evaluated on the last axis of ``x`` so a batch of service
vectors can be scored at once.  Restricting to this family is what makes the
concavity hypothesis machine-checkable; host callbacks are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import NonconcaveUtility, SchemaError
from .probability import weighted_sum

KINDS = ("weighted_sum", "sum_log", "min", "affine_floor")


@dataclass(frozen=True, eq=False)
class Utility:
    """``weighted_sum``: ``sum w_i x_i`` with ``w >= 0``;
    ``sum_log``: ``sum log(offset + x_i)``;
    ``min``: ``min_i x_i``;
    ``affine_floor``: ``min_i (x_i - floor_i)``.
    """

    kind: str
    weights: np.ndarray | None = None
    offset: float = 1.0
    floor: np.ndarray | None = None

    def __post_init__(self):
        if callable(self.kind) or self.kind == "callback":
            raise NonconcaveUtility("callback utilities cannot be certified concave")
        if self.kind not in KINDS:
            raise SchemaError(f"unknown utility kind {self.kind!r}")
        if self.kind == "weighted_sum":
            if self.weights is None:
                raise SchemaError("weighted_sum needs weights")
            w = np.array(self.weights, dtype=float).reshape(-1)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise SchemaError("weighted_sum weights must be finite and nonnegative")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        if self.kind == "affine_floor":
            f = np.array(0.0 if self.floor is None else self.floor, dtype=float).reshape(-1)
            f.setflags(write=False)
            object.__setattr__(self, "floor", f)
        if self.kind == "sum_log" and not np.isfinite(self.offset):
            raise SchemaError("sum_log offset must be finite")

    @classmethod
    def weighted_sum(cls, weights) -> "Utility":
        return cls("weighted_sum", weights=weights)

    @classmethod
    def sum_log(cls, offset: float = 1.0) -> "Utility":
        return cls("sum_log", offset=float(offset))

    @classmethod
    def minimum(cls) -> "Utility":
        return cls("min")

    @classmethod
    def affine_floor(cls, floor) -> "Utility":
        return cls("affine_floor", floor=floor)

    def check_dim(self, n: int) -> None:
        if self.kind == "weighted_sum" and self.weights.size != n:
            raise SchemaError(f"weighted_sum has {self.weights.size} weights for N={n}")
        if self.kind == "affine_floor" and self.floor.size not in (1, n):
            raise SchemaError(f"affine_floor has {self.floor.size} floors for N={n}")

    def separable(self, n: int) -> bool:
        return self.kind in ("weighted_sum", "sum_log") or n == 1

    def __call__(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "weighted_sum":
            return weighted_sum(self.weights, x)
        if self.kind == "sum_log":
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.log(self.offset + x)
            terms = np.where(self.offset + x > 0, terms, -np.inf)
            return weighted_sum(np.ones(x.shape[-1]), terms)
        if self.kind == "min":
            out = np.min(x, axis=-1)
        else:
            out = np.min(x - self.floor, axis=-1)
        return float(out) if out.ndim == 0 else out

    def coordinate(self, i: int, t: np.ndarray | float):
        """Contribution of coordinate ``i`` for separable utilities."""
        if self.kind == "weighted_sum":
            return self.weights[i] * t
        if self.kind == "sum_log":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(self.offset + t > 0, np.log(self.offset + t), -np.inf)
        if self.kind == "min":
            return t
        return t - self.floor[0]

    def cvx(self, x):
        """The same utility as a cvxpy expression of the variable ``x``."""
        import cvxpy as cp

        if self.kind == "weighted_sum":
            return self.weights @ x
        if self.kind == "sum_log":
            return cp.sum(cp.log(self.offset + x))
        if self.kind == "min":
            return cp.min(x)
        floor = np.broadcast_to(self.floor, x.shape)
        return cp.min(x - floor)

    def to_config(self) -> dict[str, Any]:
        if self.kind == "weighted_sum":
            return {"type": "weighted_sum", "weights": self.weights.tolist()}
        if self.kind == "sum_log":
            return {"type": "sum_log", "offset": self.offset}
        if self.kind == "min":
            return {"type": "min"}
        return {"type": "affine_floor", "floor": self.floor.tolist()}

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "Utility":
        kind = cfg.get("type")
        if kind == "callback":
            raise NonconcaveUtility("callback utilities cannot be certified concave")
        if kind == "weighted_sum":
            return cls.weighted_sum(cfg["weights"])
        if kind == "sum_log":
            return cls.sum_log(cfg.get("offset", 1.0))
        if kind == "min":
            return cls.minimum()
        if kind == "affine_floor":
            return cls.affine_floor(cfg["floor"])
        raise SchemaError(f"unknown utility type {kind!r}")
