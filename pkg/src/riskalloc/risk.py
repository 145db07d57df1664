"""Positively homogeneous risk measures and their bounded envelopes.

Each :class:`RiskSpec` is evaluated in its dual form ``rho(Z) = sup E{zeta Z}``
over a risk envelope of densities.  The supremum is computed in closed form by
sorting (CVaR, box envelopes) or by the sign rule (MAD), so every evaluation
also yields an attaining density.  ``lower_evaluate`` is ``-rho(-Z)``, the
quantity that appears in the service constraints.

All evaluators accept a batch of random variables stacked along leading axes;
the atom axis is always the last one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import InfeasibleEnvelope, InvalidRiskSpec
from .probability import ScenarioSet, check_aligned, weighted_sum

KINDS = ("expectation", "cvar", "mad", "mean_cvar", "box_mean")
ENVELOPE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RiskSpec:
    """A risk measure from one of five closed families.

    ``beta`` is the CVaR level, ``lam`` the MAD trade-off, ``theta`` the weight
    on the mean in a mean-CVaR mixture, and ``a``/``b`` the per-atom density
    bounds of a box envelope with the mean-one constraint.
    """

    kind: str = "expectation"
    beta: float = 1.0
    lam: float = 0.0
    theta: float = 1.0
    a: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidRiskSpec(f"unknown risk kind {self.kind!r}")
        if self.kind in ("cvar", "mean_cvar") and not (0.0 < self.beta <= 1.0):
            raise InvalidRiskSpec(f"CVaR level must lie in (0, 1], got {self.beta}")
        if self.kind == "mad" and not (self.lam >= 0.0 and np.isfinite(self.lam)):
            raise InvalidRiskSpec(f"MAD trade-off must be >= 0, got {self.lam}")
        if self.kind == "mean_cvar" and not (0.0 <= self.theta <= 1.0):
            raise InvalidRiskSpec(f"mixture weight must lie in [0, 1], got {self.theta}")
        if self.kind == "box_mean":
            if self.a is None or self.b is None:
                raise InvalidRiskSpec("box envelope needs bounds a and b")
            a = np.array(self.a, dtype=float).reshape(-1)
            b = np.array(self.b, dtype=float).reshape(-1)
            if a.shape != b.shape or np.any(a > b) or not np.all(np.isfinite(a + b)):
                raise InvalidRiskSpec("box envelope needs finite bounds with a <= b")
            a.setflags(write=False)
            b.setflags(write=False)
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    # constructors -------------------------------------------------------
    @classmethod
    def expectation(cls) -> "RiskSpec":
        return cls("expectation")

    @classmethod
    def cvar(cls, beta: float) -> "RiskSpec":
        return cls("cvar", beta=float(beta))

    @classmethod
    def mad(cls, lam: float) -> "RiskSpec":
        return cls("mad", lam=float(lam))

    @classmethod
    def mean_cvar(cls, theta: float, beta: float) -> "RiskSpec":
        return cls("mean_cvar", beta=float(beta), theta=float(theta))

    @classmethod
    def box_mean(cls, a, b) -> "RiskSpec":
        return cls("box_mean", a=a, b=b)

    # config round trip --------------------------------------------------
    def to_config(self) -> dict[str, Any]:
        if self.kind == "expectation":
            return {"type": "expectation"}
        if self.kind == "cvar":
            return {"type": "cvar", "beta": self.beta}
        if self.kind == "mad":
            return {"type": "mad", "lambda": self.lam}
        if self.kind == "mean_cvar":
            return {"type": "mean_cvar", "theta": self.theta, "beta": self.beta}
        return {"type": "box_mean", "a": self.a.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "RiskSpec":
        kind = cfg.get("type")
        if kind == "expectation":
            return cls.expectation()
        if kind == "cvar":
            return cls.cvar(cfg["beta"])
        if kind == "mad":
            return cls.mad(cfg["lambda"])
        if kind == "mean_cvar":
            return cls.mean_cvar(cfg["theta"], cfg["beta"])
        if kind == "box_mean":
            return cls.box_mean(cfg["a"], cfg["b"])
        raise InvalidRiskSpec(f"unknown risk type {kind!r}")

    def refine(self, m: int) -> "RiskSpec":
        """Per-atom parameters follow the atoms through ``probability.refine``."""
        if self.kind != "box_mean" or m == 1:
            return self
        return RiskSpec.box_mean(np.repeat(self.a, m), np.repeat(self.b, m))

    @property
    def law_invariant(self) -> bool:
        return self.kind != "box_mean"

    def atom_key(self, k: int) -> tuple:
        """Per-atom parameters; atoms with equal keys are exchangeable."""
        if self.kind == "box_mean":
            return (float(self.a[k]), float(self.b[k]))
        return ()

    def _effective(self) -> str:
        # beta = 1, lam = 0 and theta = 1 reduce to the plain expectation
        if self.kind == "cvar" and self.beta == 1.0:
            return "expectation"
        if self.kind == "mad" and self.lam == 0.0:
            return "expectation"
        if self.kind == "mean_cvar":
            if self.theta == 1.0 or self.beta == 1.0:
                return "expectation"
            if self.theta == 0.0:
                return "cvar"
        return self.kind

    def __repr__(self) -> str:
        params = {k: v for k, v in self.to_config().items() if k != "type"}
        inner = ", ".join(f"{k}={v}" for k, v in params.items())
        return f"RiskSpec({self.kind}{', ' + inner if inner else ''})"


@dataclass(frozen=True)
class Envelope:
    """Bounded set of densities ``zeta`` with ``|zeta| <= gamma``.

    ``lower``/``upper`` are per-atom bounds when the envelope is a box (with
    ``mean_one`` the mean-one constraint); ``centered`` holds the MAD trade-off
    when densities take the form ``1 + z - E{z}`` with ``|z| <= centered``.
    """

    gamma: float
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    mean_one: bool = True
    centered: float | None = None


def envelope_gamma(risk: RiskSpec) -> float:
    kind = risk.kind
    if kind == "expectation":
        return 1.0
    if kind == "cvar":
        return 1.0 / risk.beta
    if kind == "mad":
        return 1.0 + 2.0 * risk.lam
    if kind == "mean_cvar":
        return max(1.0, 1.0 / risk.beta)
    return float(max(np.max(np.abs(risk.a)), np.max(np.abs(risk.b))))


def envelope(risk: RiskSpec, S: ScenarioSet) -> Envelope:
    K = S.size
    gamma = envelope_gamma(risk)
    kind = risk._effective()
    if kind == "expectation":
        one = np.ones(K)
        return Envelope(gamma, one, one)
    if kind == "cvar":
        return Envelope(gamma, np.zeros(K), np.full(K, 1.0 / risk.beta))
    if kind == "mean_cvar":
        th = risk.theta
        return Envelope(gamma, np.full(K, th), np.full(K, th + (1.0 - th) / risk.beta))
    if kind == "mad":
        return Envelope(gamma, centered=risk.lam)
    a, b = _box_bounds(risk, S)
    return Envelope(gamma, a, b)


def _box_bounds(risk: RiskSpec, S: ScenarioSet) -> tuple[np.ndarray, np.ndarray]:
    if risk.a.size != S.size:
        raise InvalidRiskSpec(f"box envelope has {risk.a.size} bounds for K={S.size} atoms")
    lo = weighted_sum(S.weights, risk.a)
    hi = weighted_sum(S.weights, risk.b)
    if lo > 1.0 + ENVELOPE_TOL or hi < 1.0 - ENVELOPE_TOL:
        raise InfeasibleEnvelope(f"mean-one density impossible: E a = {lo}, E b = {hi}")
    return risk.a, risk.b


# sup-attaining densities -------------------------------------------------

def _fill(w: np.ndarray, Z: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Maximize ``E{zeta Z}`` over ``lower <= zeta <= upper``, ``E{zeta} = 1``.

    Start from ``lower`` and spend the remaining probability mass on atoms in
    descending order of ``Z`` (ties: ascending atom index).
    """
    order = np.argsort(-Z, axis=-1, kind="stable")
    ws = w[order]
    lo = np.broadcast_to(lower, Z.shape)
    hi = np.broadcast_to(upper, Z.shape)
    lo_s = np.take_along_axis(lo, order, axis=-1)
    cap = ws * (np.take_along_axis(hi, order, axis=-1) - lo_s)
    budget = 1.0 - weighted_sum(w, lower)
    before = np.cumsum(cap, axis=-1) - cap
    take = np.clip(np.expand_dims(budget, -1) - before, 0.0, cap)
    zeta_sorted = lo_s + take / ws
    zeta = np.empty_like(zeta_sorted)
    np.put_along_axis(zeta, order, zeta_sorted, axis=-1)
    return zeta


def _cvar_density(w, Z, beta):
    # mass t_k on the worst atoms, density t_k / (beta w_k)
    order = np.argsort(-Z, axis=-1, kind="stable")
    ws = w[order]
    before = np.cumsum(ws, axis=-1) - ws
    take = np.clip(beta - before, 0.0, ws)
    zeta = np.empty(Z.shape)
    np.put_along_axis(zeta, order, take / (beta * ws), axis=-1)
    value = weighted_sum(take, np.take_along_axis(Z, order, axis=-1)) / beta
    return zeta, value


def _mad_density(w, Z, lam):
    mean = weighted_sum(w, Z)
    zp = lam * np.sign(Z - np.expand_dims(mean, -1))
    return 1.0 + zp - np.expand_dims(weighted_sum(w, zp), -1)


def _sup_density(risk: RiskSpec, S: ScenarioSet, Z: np.ndarray) -> np.ndarray:
    w = S.weights
    kind = risk._effective()
    if kind == "expectation":
        return np.ones(Z.shape)
    if kind == "cvar":
        return _cvar_density(w, Z, risk.beta)[0]
    if kind == "mad":
        return _mad_density(w, Z, risk.lam)
    if kind == "mean_cvar":
        th = risk.theta
        return th + (1.0 - th) * _cvar_density(w, Z, risk.beta)[0]
    a, b = _box_bounds(risk, S)
    return _fill(w, Z, a, b)


def upper_evaluate(risk: RiskSpec, S: ScenarioSet, Z) -> float | np.ndarray:
    """``rho(Z)``: the exact supremum of ``E{zeta Z}`` over the envelope."""
    Z = check_aligned(S, Z)
    w = S.weights
    kind = risk._effective()
    if kind == "expectation":
        return weighted_sum(w, Z)
    if kind == "cvar":
        return _cvar_density(w, Z, risk.beta)[1]
    if kind == "mad":
        mean = weighted_sum(w, Z)
        dev = weighted_sum(w, np.abs(Z - np.expand_dims(mean, -1)))
        return mean + risk.lam * dev
    if kind == "mean_cvar":
        th = risk.theta
        return th * weighted_sum(w, Z) + (1.0 - th) * _cvar_density(w, Z, risk.beta)[1]
    zeta = _sup_density(risk, S, Z)
    return weighted_sum(w, zeta * Z)


def lower_evaluate(risk: RiskSpec, S: ScenarioSet, Z) -> float | np.ndarray:
    """``-rho(-Z)``: the infimum of ``E{zeta Z}`` over the envelope."""
    Z = check_aligned(S, Z)
    return 0.0 - upper_evaluate(risk, S, -Z)


def worst_case_density(risk: RiskSpec, S: ScenarioSet, Z, direction: str = "sup") -> np.ndarray:
    """A density attaining :func:`upper_evaluate` (``sup``) or :func:`lower_evaluate` (``inf``)."""
    Z = check_aligned(S, Z)
    if direction == "sup":
        return _sup_density(risk, S, Z)
    if direction == "inf":
        return _sup_density(risk, S, -Z)
    raise ValueError(f"direction must be 'sup' or 'inf', got {direction!r}")


def primal_cvar(beta: float, S: ScenarioSet, Z) -> float:
    """Variational CVaR ``inf_t t + E{(Z - t)_+} / beta``.

    The objective is piecewise linear in ``t`` with kinks at the atom values,
    so the infimum is attained at one of them.
    """
    if not (0.0 < beta <= 1.0):
        raise InvalidRiskSpec(f"CVaR level must lie in (0, 1], got {beta}")
    Z = check_aligned(S, Z)
    if Z.ndim != 1:
        raise ValueError("primal_cvar evaluates one random variable at a time")
    best = np.inf
    for t in Z:
        val = t + weighted_sum(S.weights, np.maximum(Z - t, 0.0)) / beta
        best = min(best, val)
    return float(best)


def is_admissible(risk: RiskSpec, S: ScenarioSet, zeta, tol: float = 1e-9) -> bool:
    """Membership test for the risk envelope of ``risk`` on ``S``."""
    zeta = check_aligned(S, zeta)
    if abs(weighted_sum(S.weights, zeta) - 1.0) > tol:
        return False
    kind = risk._effective()
    if kind == "mad":
        return float(np.max(zeta) - np.min(zeta)) <= 2.0 * risk.lam + tol
    env = envelope(risk, S)
    return bool(np.all(zeta >= env.lower - tol) and np.all(zeta <= env.upper + tol))


def sample_density(risk: RiskSpec, S: ScenarioSet, rng: np.random.Generator,
                   n_vertices: int = 3) -> np.ndarray:
    """A random admissible density.

    Box-type envelopes are sampled as random convex combinations of vertices
    obtained by filling in random atom orders; MAD densities come from a
    uniform perturbation in ``[-lam, lam]`` recentred to mean one.
    """
    K = S.size
    kind = risk._effective()
    if kind == "expectation":
        return np.ones(K)
    if kind == "mad":
        zp = rng.uniform(-risk.lam, risk.lam, size=K)
        return 1.0 + zp - weighted_sum(S.weights, zp)
    env = envelope(risk, S)
    verts = np.stack([_fill(S.weights, rng.standard_normal(K), env.lower, env.upper)
                      for _ in range(n_vertices)])
    mix = rng.dirichlet(np.ones(n_vertices))
    return mix @ verts
