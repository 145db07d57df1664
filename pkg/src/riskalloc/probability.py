"""Finite weighted-atom models of the channel distribution.

A :class:`ScenarioSet` holds ``K`` atoms ``h_k`` in ``R^{N_H}`` with strictly
positive weights summing to one.  Atom refinement (:func:`refine`) splits every
atom into equal-weight copies so that experiments can drive the largest atom
mass towards zero.

All weighted sums go through :func:`weighted_sum`, which rounds the exact sum
once (``math.fsum``).  The result therefore does not depend on evaluation
order, and refining by a power of two preserves expectations bit for bit.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LengthMismatch, NonPositiveWeight, WeightSumOutOfRange

WEIGHT_SUM_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Weighted atoms approximating the distribution of the random state."""

    points: np.ndarray  # (K, N_H)
    weights: np.ndarray  # (K,)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScenarioSet):
            return NotImplemented
        return (np.array_equal(self.points, other.points)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self) -> int:
        return hash((self.points.tobytes(), self.weights.tobytes()))

    def to_text(self) -> str:
        """Plain-text table, one atom per row: ``w, h_1, ..., h_{N_H}``."""
        buf = io.StringIO()
        header = ["w"] + [f"h_{j + 1}" for j in range(self.dim)]
        buf.write(", ".join(header) + "\n")
        for w, h in zip(self.weights, self.points):
            buf.write(", ".join(f"{v:.17g}" for v in (w, *h)) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ScenarioSet":
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if rows and rows[0].lstrip().startswith("w"):
            rows = rows[1:]
        data = [[float(tok) for tok in row.split(",")] for row in rows]
        if not data:
            raise LengthMismatch("empty scenario table")
        return make_scenario_set([r[1:] for r in data], [r[0] for r in data])


def make_scenario_set(points: Iterable[Sequence[float]] | np.ndarray,
                      weights: Iterable[float] | np.ndarray) -> ScenarioSet:
    """Validate atoms and weights and return a normalized :class:`ScenarioSet`.

    Weights must be strictly positive and sum to one within ``1e-9``; they are
    then rescaled so the sum is one to machine precision.
    """
    w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights,
                   dtype=float).reshape(-1)
    try:
        pts = np.asarray(points, dtype=float)
    except ValueError as exc:  # ragged rows
        raise LengthMismatch("scenario points have inconsistent dimensions") from exc
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise LengthMismatch("scenario points must be a list of vectors")
    if w.size == 0:
        raise LengthMismatch("at least one atom is required")
    if pts.shape[0] != w.size:
        raise LengthMismatch(f"{pts.shape[0]} points but {w.size} weights")
    if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
        raise NonPositiveWeight("every atom weight must be strictly positive")
    if not np.all(np.isfinite(pts)):
        raise LengthMismatch("scenario points must be finite")
    total = math.fsum(w)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumOutOfRange(f"weights sum to {total!r}, expected 1")
    if total != 1.0:
        w = w / total
    return ScenarioSet(points=_frozen(pts), weights=_frozen(w))


def refine(S: ScenarioSet, m: int) -> ScenarioSet:
    """Split each atom into ``m`` adjacent copies of weight ``w_k / m``."""
    if int(m) != m or m < 1:
        raise ValueError(f"refinement factor must be a positive integer, got {m!r}")
    m = int(m)
    if m == 1:
        return S
    return ScenarioSet(points=_frozen(np.repeat(S.points, m, axis=0)),
                       weights=_frozen(np.repeat(S.weights / m, m)))


def duplicate(Z, m: int) -> np.ndarray:
    """Extend a random variable (or per-atom table) to ``refine(S, m)``."""
    return np.repeat(np.asarray(Z, dtype=float), int(m), axis=0)


def weighted_sum(w: np.ndarray, Z: np.ndarray) -> float | np.ndarray:
    """Correctly rounded ``sum_k w_k Z_k``; rows of a 2-D ``Z`` are reduced separately."""
    prod = np.asarray(w, dtype=float) * np.asarray(Z, dtype=float)
    if prod.ndim == 1:
        return math.fsum(prod)
    flat = prod.reshape(-1, prod.shape[-1])
    out = np.fromiter((math.fsum(row) for row in flat), dtype=float, count=flat.shape[0])
    return out.reshape(prod.shape[:-1])


def check_aligned(S: ScenarioSet, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 0 or Z.shape[-1] != S.size:
        raise LengthMismatch(f"random variable of shape {Z.shape} does not match K={S.size}")
    return Z


def expectation(S: ScenarioSet, Z) -> float | np.ndarray:
    """``E{Z}`` under the atom weights."""
    return weighted_sum(S.weights, check_aligned(S, Z))
