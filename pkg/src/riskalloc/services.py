"""Instantaneous service functions ``f(p, h)``.

Every service maps a batch of allocations ``P[..., N_p]`` and states
``H[..., N_H]`` to service levels ``[..., N]``.  None of them needs to be
concave in ``p``; the interference rate is the canonical nonconvex example.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .errors import DomainError, SchemaError


class ServiceSpec:
    """Base class; subclasses define ``n_out``, ``n_policy`` and ``evaluate``."""

    family: str = ""
    n_out: int
    n_policy: int

    def evaluate(self, P, H) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict[str, Any]:
        raise SchemaError(f"{type(self).__name__} cannot be written to a config file")


def _rates(P: np.ndarray, H: np.ndarray, noise: float, coupling: float) -> np.ndarray:
    signal = H * P
    interference = coupling * (signal.sum(axis=-1, keepdims=True) - signal)
    return np.log2(1.0 + signal / (noise + interference))


@dataclass(frozen=True)
class LinearService(ServiceSpec):
    """``f_i(p, h) = h_i p_i``; the simplest (concave) service."""

    users: int
    family = "linear"

    @property
    def n_out(self) -> int:
        return self.users

    @property
    def n_policy(self) -> int:
        return self.users

    def evaluate(self, P, H) -> np.ndarray:
        return np.asarray(H, float) * np.asarray(P, float)

    def to_config(self):
        return {"family": "linear", "users": self.users}


@dataclass(frozen=True)
class InterferenceRate(ServiceSpec):
    """``log2(1 + h_i p_i / (noise + coupling * sum_{j != i} h_j p_j))`` per user."""

    users: int
    noise: float = 1.0
    coupling: float = 1.0
    family = "interference_rate"

    def __post_init__(self):
        if self.noise <= 0 or self.coupling < 0:
            raise SchemaError("interference rate needs noise > 0 and coupling >= 0")

    @property
    def n_out(self) -> int:
        return self.users

    @property
    def n_policy(self) -> int:
        return self.users

    def evaluate(self, P, H) -> np.ndarray:
        return _rates(np.asarray(P, float), np.asarray(H, float), self.noise, self.coupling)

    def to_config(self):
        return {"family": "interference_rate", "users": self.users,
                "noise": self.noise, "coupling": self.coupling}


@dataclass(frozen=True)
class AwgnRate(ServiceSpec):
    """Interference-free rate ``log2(1 + h_i p_i / noise)``; concave in ``p``."""

    users: int
    noise: float = 1.0
    family = "awgn_rate"

    def __post_init__(self):
        if self.noise <= 0:
            raise SchemaError("awgn rate needs noise > 0")

    @property
    def n_out(self) -> int:
        return self.users

    @property
    def n_policy(self) -> int:
        return self.users

    def evaluate(self, P, H) -> np.ndarray:
        return _rates(np.asarray(P, float), np.asarray(H, float), self.noise, 0.0)

    def to_config(self):
        return {"family": "awgn_rate", "users": self.users, "noise": self.noise}


@dataclass(frozen=True)
class OutageIndicator(ServiceSpec):
    """``reward`` when the interference rate of user ``i`` reaches ``threshold``, else 0."""

    users: int
    threshold: float = 1.0
    reward: float = 1.0
    noise: float = 1.0
    coupling: float = 1.0
    family = "outage_indicator"

    def __post_init__(self):
        if self.noise <= 0 or self.coupling < 0:
            raise SchemaError("outage indicator needs noise > 0 and coupling >= 0")

    @property
    def n_out(self) -> int:
        return self.users

    @property
    def n_policy(self) -> int:
        return self.users

    def evaluate(self, P, H) -> np.ndarray:
        rates = _rates(np.asarray(P, float), np.asarray(H, float), self.noise, self.coupling)
        return np.where(rates >= self.threshold, self.reward, 0.0)

    def to_config(self):
        return {"family": "outage_indicator", "users": self.users, "threshold": self.threshold,
                "reward": self.reward, "noise": self.noise, "coupling": self.coupling}


@dataclass(frozen=True, eq=False)
class TableService(ServiceSpec):
    """Explicit lookup ``values[label, level, i]``.

    The label is the first coordinate of ``h`` rounded to an integer and the
    allocation must be one of ``levels`` (scalar policies only).
    """

    levels: np.ndarray
    values: np.ndarray
    family = "table"

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or values.shape[1] != levels.size:
            raise SchemaError("table values must have shape (labels, levels, outputs)")
        if not np.all(np.isfinite(values)):
            raise SchemaError("table values must be finite")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)

    @property
    def n_out(self) -> int:
        return self.values.shape[2]

    @property
    def n_policy(self) -> int:
        return 1

    def evaluate(self, P, H) -> np.ndarray:
        P = np.asarray(P, dtype=float)[..., 0]
        labels = np.rint(np.asarray(H, dtype=float)[..., 0]).astype(int)
        hit = np.abs(P[..., None] - self.levels) <= 1e-12
        if not np.all(hit.any(axis=-1)):
            raise DomainError("table service evaluated off its allocation levels")
        if np.any(labels < 0) or np.any(labels >= self.values.shape[0]):
            raise DomainError("table service evaluated at an unknown state label")
        return self.values[labels, hit.argmax(axis=-1)]

    def to_config(self):
        return {"family": "table", "levels": self.levels.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class Callback(ServiceSpec):
    """Host-supplied ``fn(p, h) -> R^N``; must be pure and reentrant."""

    fn: Callable[[np.ndarray, np.ndarray], Any]
    n_out: int
    n_policy: int
    family = "callback"

    def evaluate(self, P, H) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        H = np.asarray(H, dtype=float)
        lead = np.broadcast_shapes(P.shape[:-1], H.shape[:-1])
        P = np.broadcast_to(P, lead + P.shape[-1:]).reshape(-1, P.shape[-1])
        H = np.broadcast_to(H, lead + H.shape[-1:]).reshape(-1, H.shape[-1])
        out = np.array([np.asarray(self.fn(p, h), dtype=float).reshape(self.n_out)
                        for p, h in zip(P, H)])
        return out.reshape(lead + (self.n_out,))


def service_from_config(cfg: Mapping[str, Any]) -> ServiceSpec:
    fam = cfg.get("family")
    kw = {k: v for k, v in cfg.items() if k != "family"}
    try:
        if fam == "linear":
            return LinearService(**kw)
        if fam == "interference_rate":
            return InterferenceRate(**kw)
        if fam == "awgn_rate":
            return AwgnRate(**kw)
        if fam == "outage_indicator":
            return OutageIndicator(**kw)
        if fam == "table":
            return TableService(**kw)
    except TypeError as exc:
        raise SchemaError(f"bad service parameters: {exc}") from exc
    raise SchemaError(f"unknown service family {fam!r}")
