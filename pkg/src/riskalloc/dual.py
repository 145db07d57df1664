"""Lagrangian relaxation of the risk constraints and the projected subgradient dual solver.

The Lagrangian separates into a concave part in ``x`` and a nonconvex part in
the policy, ``sum_i lam_i * lowerEvaluate(rho_i, f_i(p))``.  The policy part is
maximized over the per-atom allocation grid by exhaustive enumeration, cyclic
coordinate ascent or a density/policy alternation.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrace, GridTooLarge, NegativeMultiplier
from .model import RCPInstance, min_slack
from .risk import worst_case_density

METHODS = ("exhaustive", "coordinate", "minimax")
GRID_LIMIT = 10**7
GOLDEN_ITERS = 120
PG_ITERS = 200
RESTARTS = 8
MINIMAX_ROUNDS = 50
CHUNK = 1 << 15


@dataclass(frozen=True)
class Multipliers:
    lam_g: np.ndarray
    lam_rho: np.ndarray

    def __post_init__(self):
        g = np.array(self.lam_g, dtype=float).reshape(-1)
        r = np.array(self.lam_rho, dtype=float).reshape(-1)
        if np.any(g < 0) or np.any(r < 0) or not np.all(np.isfinite(np.concatenate([g, r]))):
            raise NegativeMultiplier("multipliers must be finite and nonnegative")
        object.__setattr__(self, "lam_g", g)
        object.__setattr__(self, "lam_rho", r)

    @classmethod
    def zeros(cls, inst: RCPInstance) -> "Multipliers":
        return cls(np.zeros(inst.n_g), np.zeros(inst.n))

    @classmethod
    def from_vector(cls, inst: RCPInstance, v) -> "Multipliers":
        v = np.asarray(v, dtype=float).reshape(-1)
        return cls(v[: inst.n_g], v[inst.n_g:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.lam_g, self.lam_rho])


def _as_multipliers(inst: RCPInstance, lam) -> Multipliers:
    if isinstance(lam, Multipliers):
        out = lam
    elif np.ndim(lam) == 0:
        out = Multipliers(np.full(inst.n_g, float(lam)), np.full(inst.n, float(lam)))
    else:
        out = Multipliers.from_vector(inst, lam)
    if out.lam_g.size != inst.n_g or out.lam_rho.size != inst.n:
        raise ValueError(f"expected {inst.n_g}+{inst.n} multipliers")
    return out


def lagrangian(inst: RCPInstance, x, p, lam) -> float:
    """``g^o(x) + <lam_g, g(x)> + <lam_rho, r(p) - x>`` with ``r`` the lower risk values."""
    lam = _as_multipliers(inst, lam)
    x = inst.check_x(x)
    r = inst.risk_vector(p)
    terms = [inst.objective(x)]
    terms += [l * g(x) for l, g in zip(lam.lam_g, inst.constraints)]
    terms += list(lam.lam_rho * (r - x))
    return math.fsum(terms)


# x-part -----------------------------------------------------------------

def x_objective(inst: RCPInstance, lam: Multipliers, x) -> float | np.ndarray:
    """Concave part ``g^o(x) + <lam_g, g(x)> - <lam_rho, x>`` (batched over ``x[..., N]``)."""
    x = np.asarray(x, dtype=float)
    val = inst.objective(x)
    for l, g in zip(lam.lam_g, inst.constraints):
        if l != 0.0:
            val = val + l * g(x)
    return val - x @ lam.lam_rho


def _x_separable(inst: RCPInstance, lam: Multipliers) -> bool:
    us = [inst.objective] + [g for l, g in zip(lam.lam_g, inst.constraints) if l != 0.0]
    return all(u.separable(inst.n) for u in us)


def _golden(phi, lo: float, hi: float) -> float:
    if hi <= lo:
        return lo
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(GOLDEN_ITERS):
        if b - a <= 1e-13 * max(1.0, abs(a), abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = phi(d)
    return 0.5 * (a + b)


def _pick_lowest(cands, vals) -> tuple[float, float]:
    # maximal value; among exact ties the smallest point
    vals = np.asarray(vals, dtype=float)
    best = float(np.max(vals))
    j = min(np.flatnonzero(vals == best), key=lambda i: cands[i])
    return float(cands[j]), best


def maximize_over_x(inst: RCPInstance, lam) -> tuple[np.ndarray, float]:
    """Maximize the concave part of the Lagrangian over the box ``X``.

    Separable utilities are solved coordinate by coordinate (golden section
    plus both endpoints).  Otherwise projected gradient ascent with central
    finite differences and backtracking runs for 200 iterations from the box
    centre; the best point seen (corners included) is returned.
    """
    lam = _as_multipliers(inst, lam)
    lo, hi = inst.x_lower, inst.x_upper
    if _x_separable(inst, lam):
        us = [(1.0, inst.objective)] + [(l, g) for l, g in zip(lam.lam_g, inst.constraints) if l != 0.0]
        x = np.empty(inst.n)
        for i in range(inst.n):
            def phi(t, i=i):
                return sum(c * u.coordinate(i, t) for c, u in us) - lam.lam_rho[i] * t
            t = _golden(phi, lo[i], hi[i])
            cands = np.array([lo[i], hi[i], t])
            x[i] = _pick_lowest(cands, [phi(c) for c in cands])[0]
        return x, float(x_objective(inst, lam, x))
    return _projected_gradient(inst, lam)


def _projected_gradient(inst: RCPInstance, lam: Multipliers) -> tuple[np.ndarray, float]:
    lo, hi = inst.x_lower, inst.x_upper
    width = np.maximum(hi - lo, 1e-12)
    h = 1e-6 * width

    def phi(x):
        return float(x_objective(inst, lam, x))

    x = 0.5 * (lo + hi)
    fx = phi(x)
    best_x, best_f = x.copy(), fx
    for corner in (lo, hi):
        fc = phi(corner)
        if fc > best_f or (fc == best_f and corner is lo):
            best_x, best_f = corner.copy(), fc
    step = float(np.max(width))
    for _ in range(PG_ITERS):
        grad = np.empty(inst.n)
        for i in range(inst.n):
            e = np.zeros(inst.n)
            e[i] = h[i]
            grad[i] = (phi(np.clip(x + e, lo, hi)) - phi(np.clip(x - e, lo, hi))) / (
                np.clip(x + e, lo, hi)[i] - np.clip(x - e, lo, hi)[i])
        moved = False
        t = step
        while t > 1e-14 * float(np.max(width)):
            y = np.clip(x + t * grad, lo, hi)
            fy = phi(y)
            if fy > fx:
                x, fx, moved = y, fy, True
                step = min(2.0 * t, float(np.max(width)))
                break
            t *= 0.5
        if fx > best_f:
            best_x, best_f = x.copy(), fx
        if not moved:
            break
    return best_x, best_f


# policy part ------------------------------------------------------------

@dataclass
class _PolicyTable:
    runs: list[tuple[int, int]]  # (start atom, length)
    combos: list[np.ndarray]  # per run: (C_r, L_r) option indices
    R: np.ndarray  # (C, N) risk vectors of every canonical policy

    def index(self, c: int) -> np.ndarray:
        sizes = [len(cb) for cb in self.combos]
        parts = np.unravel_index(c, sizes)
        return np.concatenate([cb[j] for cb, j in zip(self.combos, parts)])


def _runs(inst: RCPInstance) -> list[tuple[int, int]]:
    """Maximal blocks of consecutive exchangeable atoms (same point, weight and envelope bounds)."""
    S = inst.scenarios
    runs, start = [], 0
    for k in range(1, S.size + 1):
        same = (k < S.size and np.array_equal(S.points[k], S.points[start])
                and S.weights[k] == S.weights[start]
                and all(r.atom_key(k) == r.atom_key(start) for r in inst.risks))
        if not same:
            runs.append((start, k - start))
            start = k
    return runs


def grid_count(inst: RCPInstance) -> int:
    """Number of canonical policies enumerated by the exhaustive method."""
    opts = inst.atom_options()
    return math.prod(math.comb(len(opts[s]) + L - 1, L) for s, L in _runs(inst))


def _policy_table(inst: RCPInstance) -> _PolicyTable:
    if "policy_table" in inst._cache:
        return inst._cache["policy_table"]
    total = grid_count(inst)
    if total > GRID_LIMIT:
        raise GridTooLarge(f"{total} policies exceed the enumeration limit {GRID_LIMIT}")
    opts, vals = inst.atom_options(), inst.option_values()
    runs = _runs(inst)
    combos = [np.array(list(itertools.combinations_with_replacement(range(len(opts[s])), L)),
                       dtype=np.int64).reshape(-1, L) for s, L in runs]
    sizes = [len(cb) for cb in combos]
    R = np.empty((total, inst.n))
    for lo in range(0, total, CHUNK):
        c = np.arange(lo, min(total, lo + CHUNK))
        parts = np.unravel_index(c, sizes)
        F = np.empty((c.size, inst.n, inst.size))
        for (s, L), cb, j in zip(runs, combos, parts):
            for off in range(L):
                F[:, :, s + off] = vals[s + off][cb[j, off]]
        R[lo:lo + c.size] = inst.risk_vector_of_table(F)
    table = _PolicyTable(runs, combos, R)
    inst._cache["policy_table"] = table
    return table


def _weighted(lam_rho: np.ndarray, R: np.ndarray) -> np.ndarray:
    # fixed-order accumulation, independent of BLAS threading
    out = np.zeros(R.shape[:-1])
    for i, l in enumerate(lam_rho):
        if l != 0.0:
            out = out + l * R[..., i]
    return out


def _table_of(inst: RCPInstance, idx: np.ndarray) -> np.ndarray:
    vals = inst.option_values()
    return np.stack([vals[k][j] for k, j in enumerate(idx)], axis=1)


def _coordinate(inst: RCPInstance, lam_rho: np.ndarray, seed: int):
    vals = inst.option_values()
    rng = np.random.default_rng(seed)
    best_idx, best_val = None, -np.inf
    for _ in range(RESTARTS):
        idx = np.array([rng.integers(len(v)) for v in vals])
        F = _table_of(inst, idx)
        cur = float(_weighted(lam_rho, inst.risk_vector_of_table(F)))
        changed = True
        while changed:
            changed = False
            for k, V in enumerate(vals):
                batch = np.repeat(F[None], len(V), axis=0)
                batch[:, :, k] = V
                scores = _weighted(lam_rho, inst.risk_vector_of_table(batch))
                j = int(np.argmax(scores))
                if scores[j] > cur + 1e-13 * max(1.0, abs(cur)):
                    idx[k], F, cur, changed = j, batch[j], float(scores[j]), True
        if cur > best_val or (cur == best_val and tuple(idx) < tuple(best_idx)):
            best_idx, best_val = idx.copy(), cur
    return best_idx, best_val


def _minimax(inst: RCPInstance, lam_rho: np.ndarray):
    vals = inst.option_values()
    S = inst.scenarios
    zeta = np.ones((inst.n, inst.size))
    best_idx, best_val, prev = None, -np.inf, None
    for _ in range(MINIMAX_ROUNDS):
        idx = np.array([int(np.argmax(V @ (lam_rho * zeta[:, k]))) for k, V in enumerate(vals)])
        if prev is not None and np.array_equal(idx, prev):
            break
        F = _table_of(inst, idx)
        val = float(_weighted(lam_rho, inst.risk_vector_of_table(F)))
        if val > best_val:
            best_idx, best_val = idx, val
        zeta = np.array([worst_case_density(r, S, F[i], "inf") for i, r in enumerate(inst.risks)])
        prev = idx
    return best_idx, best_val


def maximize_over_policy(inst: RCPInstance, lam_rho, method: str = "exhaustive", seed: int = 0
                         ) -> tuple[np.ndarray, float]:
    """Grid policy maximizing ``sum_i lam_i lowerEvaluate(rho_i, f_i(p))``.

    ``exhaustive`` enumerates every policy up to permutations of exchangeable
    atoms (which leave law-invariant risks unchanged) and returns the
    lexicographically smallest maximizer.  ``coordinate`` and ``minimax`` are
    heuristics without a global guarantee.
    """
    lam_rho = np.asarray(lam_rho, dtype=float).reshape(-1)
    if np.any(lam_rho < 0):
        raise NegativeMultiplier("risk multipliers must be nonnegative")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "exhaustive":
        table = _policy_table(inst)
        scores = _weighted(lam_rho, table.R)
        c = int(np.argmax(scores))
        return inst.grid_policy(table.index(c)), float(scores[c])
    if not np.any(lam_rho > 0):
        return inst.grid_policy(np.zeros(inst.size, dtype=int)), 0.0
    if method == "coordinate":
        idx, val = _coordinate(inst, lam_rho, seed)
    else:
        idx, val = _minimax(inst, lam_rho)
    return inst.grid_policy(idx), val


@dataclass(frozen=True)
class DualValue:
    value: float
    x: np.ndarray
    policy: np.ndarray
    risk: np.ndarray  # lower risk vector of the policy maximizer
    subgradient: np.ndarray  # (g(x), r(p) - x)
    exact: bool


def dual_value(inst: RCPInstance, lam, method: str = "exhaustive", seed: int = 0) -> DualValue:
    """``D(lam) = sup L`` with the maximizers and the constraint values there."""
    lam = _as_multipliers(inst, lam)
    x, fx = maximize_over_x(inst, lam)
    p, _ = maximize_over_policy(inst, lam.lam_rho, method, seed)
    r = inst.risk_vector(p)
    value = fx + math.fsum(lam.lam_rho * r)
    g = np.array([u(x) for u in inst.constraints], dtype=float)
    s = np.concatenate([g, r - x])
    exact = method == "exhaustive" and _x_separable(inst, lam)
    return DualValue(float(value), x, p, r, s, exact)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    multipliers: np.ndarray
    value: float
    x: np.ndarray
    policy: np.ndarray
    risk: np.ndarray
    subgradient: np.ndarray


@dataclass
class DualSolveResult:
    best_dual: float
    best_multipliers: Multipliers
    trace: list[TraceEntry]
    method: str
    exact: bool
    instance: RCPInstance = field(repr=False)

    def trace_csv(self) -> str:
        inst = self.instance
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        lam_names = [f"lambda_g{j + 1}" for j in range(inst.n_g)] + \
                    [f"lambda_rho{i + 1}" for i in range(inst.n)]
        slack_names = [f"slack_g{j + 1}" for j in range(inst.n_g)] + \
                      [f"slack_rho{i + 1}" for i in range(inst.n)]
        w.writerow(["iter", "D", *lam_names, *slack_names])
        for e in self.trace:
            w.writerow([e.iteration, repr(e.value), *map(repr, e.multipliers.tolist()),
                        *map(repr, e.subgradient.tolist())])
        return buf.getvalue()


def solve_dual(inst: RCPInstance, max_iters: int = 500, eta0: float = 1.0,
               method: str = "exhaustive", seed: int = 0) -> DualSolveResult:
    """Projected subgradient descent on ``D`` from ``lam = 0`` with steps ``eta0 / sqrt(t + 1)``."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    lam = np.zeros(inst.n_g + inst.n)
    trace: list[TraceEntry] = []
    best, best_lam, exact = np.inf, lam, True
    for t in range(max_iters):
        dv = dual_value(inst, lam, method, seed)
        exact &= dv.exact
        trace.append(TraceEntry(t, lam, dv.value, dv.x, dv.policy, dv.risk, dv.subgradient))
        if dv.value < best:
            best, best_lam = dv.value, lam
        lam = np.maximum(0.0, lam - eta0 / math.sqrt(t + 1) * dv.subgradient)
    return DualSolveResult(float(best), Multipliers.from_vector(inst, best_lam), trace,
                           method, bool(exact), inst)


# primal recovery ----------------------------------------------------------

@dataclass(frozen=True)
class PrimalCandidate:
    x: np.ndarray
    policy: np.ndarray
    value: float
    min_slack: float
    feasible: bool
    weights: np.ndarray  # mixture weights over the distinct trace policies
    refine_factor: int
    repaired_x: np.ndarray | None = None
    repaired_value: float | None = None

    @property
    def best_feasible_value(self) -> float | None:
        vals = [v for v in ((self.value if self.feasible else None), self.repaired_value)
                if v is not None]
        return max(vals) if vals else None


def distinct_policies(result: DualSolveResult) -> tuple[list[np.ndarray], np.ndarray]:
    seen: dict[bytes, int] = {}
    pols, risks = [], []
    for e in result.trace:
        key = e.policy.tobytes()
        if key not in seen:
            seen[key] = len(pols)
            pols.append(e.policy)
            risks.append(e.risk)
    return pols, np.array(risks)


def pareto_rows(risks: np.ndarray) -> np.ndarray:
    """Indices of the first occurrence of each risk vector that no other row weakly dominates."""
    order = np.argsort(-risks.sum(axis=1), kind="stable")
    kept: list[int] = []
    for j in order:
        # a weak dominator has at least the same coordinate sum, so it was seen already
        if kept and np.any(np.all(risks[kept] >= risks[j], axis=1)):
            continue
        kept.append(int(j))
    return np.array(sorted(kept), dtype=int)


def mixture_weights(inst: RCPInstance, risks: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Solve ``max g^o(x)`` over ``x in X``, ``g(x) >= 0``, ``x <= risks.T @ alpha``, ``alpha`` in the simplex.

    Dominated risk vectors are dropped first (every utility is nondecreasing).
    Returns ``(alpha, x)`` or ``None`` when no solver reports success.
    """
    keep = pareto_rows(risks)
    if keep.size == 1:
        # one undominated vector: it is the optimal mixture, no solver needed
        x, _, ok = inst.best_x_for(risks[keep[0]])
        if not ok:
            return None
        a = np.zeros(len(risks))
        a[keep[0]] = 1.0
        return a, np.asarray(x, dtype=float)

    import cvxpy as cp

    U = risks[keep]
    alpha = cp.Variable(len(keep), nonneg=True)
    x = cp.Variable(inst.n)
    cons = [cp.sum(alpha) == 1, x >= inst.x_lower, x <= inst.x_upper, x <= U.T @ alpha]
    cons += [g.cvx(x) >= 0 for g in inst.constraints]
    prob = cp.Problem(cp.Maximize(inst.objective.cvx(x)), cons)
    for solver in (cp.CLARABEL, cp.SCS):
        try:
            prob.solve(solver=solver)
        except cp.SolverError:
            continue
        if alpha.value is not None and prob.status in ("optimal", "optimal_inaccurate"):
            break
    else:
        return None
    a = np.zeros(len(risks))
    a[keep] = np.clip(np.asarray(alpha.value, dtype=float), 0.0, None)
    a[a < 1e-7] = 0.0
    return a / a.sum(), np.asarray(x.value, dtype=float)


def realize_mixture(inst: RCPInstance, policies: list[np.ndarray], alpha: np.ndarray,
                    m: int = 1, seed: int = 0) -> np.ndarray:
    """One policy on ``refine(S, m)`` whose risk vector approximates ``sum_t alpha_t r(p_t)``.

    Policies are folded in pairwise, heaviest first: the running mixture is
    spliced with the next policy at the conditional weight.
    """
    from .mixing import mix_policies

    fine = inst.refine(m)
    order = [int(j) for j in np.argsort(-alpha, kind="stable") if alpha[j] > 0]
    cur = np.repeat(policies[order[0]], m, axis=0)
    acc = alpha[order[0]]
    for j in order[1:]:
        nxt = np.repeat(policies[j], m, axis=0)
        share = acc / (acc + alpha[j])
        cur = mix_policies(fine, cur, nxt, share, 1, seed=seed).policy
        acc += alpha[j]
    return cur


def recover_primal(inst: RCPInstance, result: DualSolveResult, m: int = 1, tol: float = 1e-6,
                   seed: int = 0) -> PrimalCandidate:
    """Time-share the policy iterates of a dual run into one primal candidate.

    The mixture weights maximize the objective over the convex hull of the
    achieved risk vectors; the mixture is then realized by splicing on
    ``refine(S, m)`` and ``x`` is capped by what the realized policy delivers
    only in ``repaired_x``.
    """
    if not result.trace:
        raise EmptyTrace("dual trace is empty")
    pols, risks = distinct_policies(result)
    sol = mixture_weights(inst, risks)
    if sol is None:
        # no mixture is feasible for g(x) >= 0: fall back to the best single iterate
        vals = inst.best_x_for(risks)[1]
        alpha = np.zeros(len(pols))
        alpha[int(np.argmax(vals))] = 1.0
        x_plan = np.clip(risks[int(np.argmax(vals))], inst.x_lower, inst.x_upper)
    else:
        alpha, x_plan = sol
    # utilities are nondecreasing, so the exact optimum for these weights is the cap
    x_plan = np.clip(risks.T @ alpha, inst.x_lower, inst.x_upper)
    fine = inst.refine(m)
    policy = realize_mixture(inst, pols, alpha, m, seed)
    slack = min_slack(fine, x_plan, policy)
    value = float(inst.objective(x_plan))
    rx, rv, ok = fine.best_x_for(fine.risk_vector(policy))
    return PrimalCandidate(x_plan, policy, value, slack, slack >= -tol, alpha, m,
                           rx if ok else None, rv if ok else None)
