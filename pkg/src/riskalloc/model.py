"""Problem data: the risk-constrained allocation instance and its feasibility tests.

An instance couples a scenario set, a service function ``f(p, h)``, one risk
measure per service component, concave utilities on a box ``X`` and a
decomposable policy class.  Policies are ``(K, N_p)`` arrays, one allocation
per atom.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (DomainError, InadmissiblePolicy, LengthMismatch, SchemaError,
                     SlaterNotVerified)
from .probability import ScenarioSet, refine as refine_set
from .risk import RiskSpec, lower_evaluate, envelope
from .services import ServiceSpec
from .utilities import Utility

SLATER_MARGIN = 1e-6
SLATER_PROBES = 1000
ADMISSIBLE_TOL = 1e-9
POLICY_KINDS = ("uniform_box", "rectangular_box", "per_scenario_budget")


@dataclass(frozen=True, eq=False)
class PolicyClass:
    """Per-atom allocation sets; decomposable because each row is checked alone.

    ``uniform_box`` and ``rectangular_box`` are ``lower <= p <= upper``; the
    budget class additionally requires ``sum(p) <= budget + slope * sum(h)``.
    ``resolution`` is the number of grid levels per allocation dimension.
    """

    kind: str
    upper: np.ndarray
    lower: np.ndarray | None = None
    resolution: int = 2
    budget: float = np.inf
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise SchemaError(f"unknown policy class {self.kind!r}")
        upper = np.array(self.upper, dtype=float).reshape(-1)
        lower = np.zeros_like(upper) if self.lower is None else np.array(self.lower, float).reshape(-1)
        if lower.size == 1 and upper.size > 1:
            lower = np.full_like(upper, lower[0])
        if lower.shape != upper.shape or not np.all(np.isfinite(upper)) or np.any(lower > upper):
            raise SchemaError("policy bounds must be finite with lower <= upper")
        if not np.all(np.isfinite(lower)):
            raise SchemaError("policy bounds must be finite")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise SchemaError("grid resolution must be an integer >= 2")
        if self.kind == "per_scenario_budget" and not np.isfinite(self.budget):
            raise SchemaError("budget policy class needs a finite budget")
        for arr in (upper, lower):
            arr.setflags(write=False)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "resolution", int(self.resolution))

    @classmethod
    def uniform_box(cls, upper: float, dim: int = 1, resolution: int = 2) -> "PolicyClass":
        return cls("uniform_box", upper=np.full(dim, float(upper)), resolution=resolution)

    @classmethod
    def rectangular_box(cls, upper, resolution: int = 2, lower=None) -> "PolicyClass":
        return cls("rectangular_box", upper=upper, lower=lower, resolution=resolution)

    @classmethod
    def per_scenario_budget(cls, upper, budget: float, slope: float = 0.0,
                            resolution: int = 2) -> "PolicyClass":
        return cls("per_scenario_budget", upper=upper, resolution=resolution,
                   budget=float(budget), slope=float(slope))

    @property
    def dim(self) -> int:
        return self.upper.size

    def total(self, h) -> float:
        return self.budget + self.slope * float(np.sum(h))

    def levels(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.resolution) for lo, hi in zip(self.lower, self.upper)]

    def options(self, h) -> np.ndarray:
        """Admissible grid points at state ``h`` in lexicographic index order."""
        grid = np.array(list(itertools.product(*self.levels())), dtype=float)
        if self.kind == "per_scenario_budget":
            grid = grid[grid.sum(axis=1) <= self.total(h) + 1e-12]
        return grid

    def admissible(self, P, H, tol: float = ADMISSIBLE_TOL) -> np.ndarray:
        """Row-wise membership of ``P[k]`` in the allocation set at ``H[k]``."""
        P = np.asarray(P, dtype=float)
        ok = np.all((P >= self.lower - tol) & (P <= self.upper + tol), axis=-1)
        if self.kind == "per_scenario_budget":
            totals = self.budget + self.slope * np.asarray(H, float).sum(axis=-1)
            ok &= P.sum(axis=-1) <= totals + tol
        return ok

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "upper": self.upper.tolist(), "lower": self.lower.tolist(),
               "resolution": self.resolution}
        if self.kind == "per_scenario_budget":
            cfg.update(budget=self.budget, slope=self.slope)
        return cfg


def splice(p: np.ndarray, q: np.ndarray, mask) -> np.ndarray:
    """Policy equal to ``p`` on the atoms selected by ``mask`` and ``q`` elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    return np.where(mask[:, None], p, q)


@dataclass(frozen=True, eq=False)
class Witness:
    x: np.ndarray
    policy: np.ndarray
    margin: float
    probed: bool = False


@dataclass(frozen=True, eq=False)
class RCPInstance:
    scenarios: ScenarioSet
    service: ServiceSpec
    risks: tuple[RiskSpec, ...]
    objective: Utility
    constraints: tuple[Utility, ...]
    x_lower: np.ndarray
    x_upper: np.ndarray
    policy_class: PolicyClass
    witness: Witness | None = None
    seed: int = 0
    refinement: int = 1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.risks)

    @property
    def n_g(self) -> int:
        return len(self.constraints)

    @property
    def size(self) -> int:
        return self.scenarios.size

    # policies ---------------------------------------------------------
    def as_policy(self, p) -> np.ndarray:
        """Broadcast a constant allocation (scalar or one row) to a policy table."""
        P = np.asarray(p, dtype=float)
        d = self.policy_class.dim
        if P.ndim == 0:
            P = np.full((self.size, d), float(P))
        elif P.ndim == 1 and P.size == d:
            P = np.tile(P, (self.size, 1))
        elif P.ndim == 1 and d == 1 and P.size == self.size:
            P = P[:, None]
        if P.shape != (self.size, d):
            raise LengthMismatch(f"policy of shape {P.shape}, expected ({self.size}, {d})")
        return P

    def check_policy(self, p) -> np.ndarray:
        P = self.as_policy(p)
        if not np.all(self.policy_class.admissible(P, self.scenarios.points)):
            raise InadmissiblePolicy("policy leaves the allocation set on some atom")
        return P

    def check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise DomainError(f"x has {x.size} entries, expected {self.n}")
        if np.any(x < self.x_lower - 1e-12) or np.any(x > self.x_upper + 1e-12):
            raise DomainError("x lies outside the box X")
        return x

    def atom_options(self) -> list[np.ndarray]:
        if "options" not in self._cache:
            self._cache["options"] = [self.policy_class.options(h) for h in self.scenarios.points]
        return self._cache["options"]

    def option_values(self) -> list[np.ndarray]:
        """Service vectors ``f(o, h_k)`` for every grid option ``o`` of atom ``k``."""
        if "option_values" not in self._cache:
            vals = []
            for opts, h in zip(self.atom_options(), self.scenarios.points):
                v = np.asarray(self.service.evaluate(opts, np.broadcast_to(h, (len(opts), h.size))),
                               dtype=float)
                if not np.all(np.isfinite(v)):
                    raise DomainError("service is not finite on the policy grid")
                vals.append(v)
            self._cache["option_values"] = vals
        return self._cache["option_values"]

    def grid_policy(self, index: Sequence[int]) -> np.ndarray:
        opts = self.atom_options()
        return np.array([opts[k][j] for k, j in enumerate(index)], dtype=float)

    def random_grid_policy(self, rng: np.random.Generator) -> np.ndarray:
        return self.grid_policy([rng.integers(len(o)) for o in self.atom_options()])

    # evaluation -------------------------------------------------------
    def service_table(self, p) -> np.ndarray:
        """``(N, K)`` matrix with entry ``f_i(p(h_k), h_k)``."""
        P = self.check_policy(p)
        F = np.asarray(self.service.evaluate(P, self.scenarios.points), dtype=float)
        if F.shape != (self.size, self.n):
            raise DomainError(f"service returned shape {F.shape}, expected ({self.size}, {self.n})")
        return F.T

    def risk_vector_of_table(self, F) -> np.ndarray:
        """``lowerEvaluate(rho_i, F_i)`` for service tables stacked as ``(..., N, K)``."""
        F = np.asarray(F, dtype=float)
        out = np.empty(F.shape[:-1])
        for i, r in enumerate(self.risks):
            out[..., i] = lower_evaluate(r, self.scenarios, F[..., i, :])
        return out

    def risk_vector(self, p) -> np.ndarray:
        return self.risk_vector_of_table(self.service_table(p))

    def refine(self, m: int) -> "RCPInstance":
        """The same problem on ``refine(S, m)`` with policies duplicated per sub-atom."""
        m = int(m)
        if m == 1:
            return self
        key = ("refine", m)
        if key not in self._cache:
            w = self.witness
            if w is not None:
                w = Witness(w.x, np.repeat(w.policy, m, axis=0), w.margin, w.probed)
            self._cache[key] = RCPInstance(
                scenarios=refine_set(self.scenarios, m), service=self.service,
                risks=tuple(r.refine(m) for r in self.risks), objective=self.objective,
                constraints=self.constraints, x_lower=self.x_lower, x_upper=self.x_upper,
                policy_class=self.policy_class, witness=w, seed=self.seed,
                refinement=self.refinement * m)
        return self._cache[key]

    def best_x_for(self, r):
        """Best ``x`` in ``X`` with ``x <= r`` and ``g(x) >= 0``.

        All utilities are nondecreasing, so the answer is ``min(x_upper, r)``
        when that point is admissible and nothing otherwise.  Works on batches
        ``r[..., N]``; returns ``(x, value, feasible)`` with value ``-inf`` where
        infeasible.
        """
        r = np.asarray(r, dtype=float)
        x = np.minimum(self.x_upper, r)
        ok = np.all(x >= self.x_lower, axis=-1)
        for g in self.constraints:
            ok &= np.asarray(g(np.maximum(x, self.x_lower))) >= 0.0
        val = np.where(ok, self.objective(np.maximum(x, self.x_lower)), -np.inf)
        if val.ndim == 0:
            return x, float(val), bool(ok)
        return x, val, ok


def constraint_slack(inst: RCPInstance, x, p) -> tuple[np.ndarray, np.ndarray]:
    """Risk slacks ``lowerEvaluate(rho_i, f_i) - x_i`` and utility slacks ``g(x)``."""
    x = inst.check_x(x)
    risk = inst.risk_vector(p) - x
    util = np.array([g(x) for g in inst.constraints], dtype=float)
    return risk, util


def min_slack(inst: RCPInstance, x, p) -> float:
    risk, util = constraint_slack(inst, x, p)
    return float(np.min(np.concatenate([risk, util])))


def feasible_value(inst: RCPInstance, x, p, tol: float = 0.0) -> float | None:
    """``g^o(x)`` when every slack is at least ``-tol``, else ``None``."""
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    if min_slack(inst, x, p) >= -tol:
        return float(inst.objective(np.asarray(x, dtype=float)))
    return None


def make_instance(scenarios: ScenarioSet, service: ServiceSpec, risks, objective: Utility,
                  x_lower, x_upper, policy_class: PolicyClass, constraints=(),
                  witness=None, seed: int = 0, verify_slater: bool = True) -> RCPInstance:
    """Validate dimensions and the Slater condition, then build the instance.

    ``witness`` is an optional ``(x, policy)`` pair that must be strictly
    feasible with margin ``1e-6``.  Without one, 1000 seeded random pairs are
    probed and the best one is kept.
    """
    if isinstance(risks, RiskSpec):
        risks = (risks,) * service.n_out
    risks = tuple(risks)
    n = len(risks)
    if n < 1 or n != service.n_out:
        raise SchemaError(f"{n} risk measures for a service with {service.n_out} outputs")
    if not isinstance(objective, Utility) or not all(isinstance(g, Utility) for g in constraints):
        from .errors import NonconcaveUtility
        raise NonconcaveUtility("utilities must come from the closed concave family")
    for u in (objective, *constraints):
        u.check_dim(n)
    if policy_class.dim != service.n_policy:
        raise SchemaError(f"policy dimension {policy_class.dim} but service expects {service.n_policy}")
    lo = np.broadcast_to(np.asarray(x_lower, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(x_upper, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(lo > hi):
        raise SchemaError("X must be a nonempty finite box")
    for u in (objective, *constraints):
        if u.kind == "sum_log" and u.offset + float(lo.min()) <= 0:
            raise SchemaError("sum_log utility undefined on part of X")
    lo.setflags(write=False)
    hi.setflags(write=False)
    for r in risks:
        envelope(r, scenarios)  # bounds/feasibility of box envelopes
    inst = RCPInstance(scenarios, service, risks, objective, tuple(constraints), lo, hi,
                       policy_class, None, int(seed))
    if any(len(o) == 0 for o in inst.atom_options()):
        raise SchemaError("policy grid has no admissible point on some atom")
    inst.option_values()
    if not verify_slater:
        return inst
    if witness is not None:
        x, p = witness
        x = np.asarray(x, dtype=float).reshape(-1)
        try:
            margin = min_slack(inst, x, inst.as_policy(p))
        except (DomainError, InadmissiblePolicy, LengthMismatch) as exc:
            raise SlaterNotVerified(f"witness is not admissible: {exc}") from exc
        if not margin >= SLATER_MARGIN:
            raise SlaterNotVerified(f"witness slack {margin:.3g} below margin {SLATER_MARGIN}")
        w = Witness(x, inst.as_policy(p), margin)
    else:
        w = _probe_slater(inst)
    object.__setattr__(inst, "witness", w)
    return inst


def _probe_slater(inst: RCPInstance) -> Witness:
    # x is drawn uniformly in the part of X below the policy's risk vector
    # (clipped to X), which is where strictly feasible points can live
    rng = np.random.default_rng(inst.seed)
    best = None
    for _ in range(SLATER_PROBES):
        P = inst.random_grid_policy(rng)
        r = inst.risk_vector(P)
        top = np.clip(r, inst.x_lower, inst.x_upper)
        x = inst.x_lower + rng.random(inst.n) * (top - inst.x_lower)
        margin = min_slack(inst, x, P)
        if best is None or margin > best.margin:
            best = Witness(x, P, margin, probed=True)
    if best.margin < SLATER_MARGIN:
        raise SlaterNotVerified(f"best probed slack {best.margin:.3g} below margin {SLATER_MARGIN}")
    return best
