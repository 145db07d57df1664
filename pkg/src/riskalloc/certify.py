"""Numerical checks of strong duality on refined scenario sets.

``gap_study`` measures best dual bound minus best feasible value across
refinement levels; ``hyperplane_check`` and ``semi_infinite_check`` test the
two inequalities behind the duality argument, and
``closure_convexity_probe`` measures how well splicing realizes convex
combinations of risk vectors.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dual import (Multipliers, _as_multipliers, _policy_table, recover_primal, solve_dual,
                   x_objective)
from .errors import DomainError
from .mixing import mix_policies, mixture_risk_deficit
from .model import RCPInstance
from .probability import weighted_sum
from .risk import sample_density, worst_case_density

GAP_HEADER = ["m", "K", "primal", "dual", "gap_abs", "gap_rel", "method", "seed", "runtime_ms"]
PROBE_HEADER = ["pair", "alpha", "m", "deficit"]
THREADS_ENV = "RISKALLOC_THREADS"


def thread_cap(default: int | None = None) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return default or min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class GapRow:
    m: int
    K: int
    primal: float
    dual: float
    gap_abs: float
    gap_rel: float
    method: str
    seed: int
    runtime_ms: float | None = None

    def csv_fields(self) -> list[str]:
        rt = "" if self.runtime_ms is None else f"{self.runtime_ms:.1f}"
        return [str(self.m), str(self.K), repr(self.primal), repr(self.dual),
                repr(self.gap_abs), repr(self.gap_rel), self.method, str(self.seed), rt]


@dataclass
class GapReport:
    rows: list[GapRow]
    multipliers: list[Multipliers]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(GAP_HEADER)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()


def primal_from_trace(inst: RCPInstance, result) -> float:
    """Best feasible value over the policy iterates of a dual run (x capped at each risk vector)."""
    risks = np.array([e.risk for e in result.trace])
    vals = inst.best_x_for(risks)[1]
    return float(np.max(vals))


def grid_primal(inst: RCPInstance) -> float:
    """Best feasible value over all grid policies, from the exhaustive enumeration table."""
    table = _policy_table(inst)
    return float(np.max(inst.best_x_for(table.R)[1]))


def _gap_row(inst: RCPInstance, m: int, method: str, max_iters: int, eta0: float, seed: int,
             refine_factor: int, tol: float, timing: bool) -> tuple[GapRow, Multipliers]:
    t0 = time.perf_counter()
    fine = inst.refine(m)
    res = solve_dual(fine, max_iters=max_iters, eta0=eta0, method=method, seed=seed)
    cand = recover_primal(fine, res, refine_factor, tol, seed)
    values = [primal_from_trace(fine, res)]
    if cand.best_feasible_value is not None:
        values.append(cand.best_feasible_value)
    if method == "exhaustive":
        values.append(grid_primal(fine))
    primal = max(values)
    dual = res.best_dual
    gap = dual - primal
    rel = gap / max(abs(dual), 1e-12)
    runtime = (time.perf_counter() - t0) * 1e3 if timing else None
    return GapRow(m, fine.size, primal, dual, gap, rel, method, seed, runtime), res.best_multipliers


def gap_study(inst: RCPInstance, levels=(1, 2, 4, 8), method: str = "exhaustive",
              max_iters: int = 500, eta0: float = 1.0, seed: int = 0, refine_factor: int = 1,
              tol: float = 1e-6, threads: int | None = None, timing: bool = False) -> GapReport:
    """Dual bound, best feasible value and their gap at each refinement level.

    The primal value is the best of the time-shared candidate from
    ``recover_primal``, every dual iterate capped at its own risk vector and,
    for the exhaustive method, the best grid policy.  Rows are computed in
    parallel but each is deterministic, so the report does not depend on the
    thread count.
    """
    levels = [int(m) for m in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("refinement levels must be strictly ascending")
    args = (method, max_iters, eta0, seed, refine_factor, tol, timing)
    workers = min(len(levels), threads or thread_cap())
    if workers <= 1:
        out = [_gap_row(inst, m, *args) for m in levels]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda m: _gap_row(inst, m, *args), levels))
    return GapReport([r for r, _ in out], [l for _, l in out])


def _random_policy_indices(inst: RCPInstance, rng: np.random.Generator, n: int) -> np.ndarray:
    sizes = [len(o) for o in inst.atom_options()]
    return np.stack([rng.integers(s, size=n) for s in sizes], axis=1)


def _tables(inst: RCPInstance, idx: np.ndarray) -> np.ndarray:
    vals = inst.option_values()
    F = np.empty((idx.shape[0], inst.n, inst.size))
    for k in range(inst.size):
        F[:, :, k] = vals[k][idx[:, k]]
    return F


def hyperplane_check(inst: RCPInstance, lam, p_hat: float, n_samples: int = 10_000,
                     seed: int = 0) -> float:
    """``max(0, max L(x, p, lam) - p_hat)`` over seeded samples from ``X`` x grid policies.

    Samples include the box corners, the exact ``x`` maximizer and the best
    grid policy seen; the rest are uniform in ``X`` and uniform over the grid.
    """
    from .dual import maximize_over_x

    lam = _as_multipliers(inst, lam)
    rng = np.random.default_rng(seed)
    n = max(int(n_samples), 1)
    X = inst.x_lower + rng.random((n, inst.n)) * (inst.x_upper - inst.x_lower)
    X[0] = inst.x_lower
    if n > 1:
        X[1] = inst.x_upper
    if n > 2:
        X[2] = maximize_over_x(inst, lam)[0]
    idx = _random_policy_indices(inst, rng, n)
    worst = -np.inf
    for lo in range(0, n, 2048):
        sl = slice(lo, min(n, lo + 2048))
        r = inst.risk_vector_of_table(_tables(inst, idx[sl]))
        x = X[sl]
        g = np.stack([u(x) for u in inst.constraints], axis=-1) if inst.n_g else np.zeros((len(x), 0))
        L = inst.objective(x) + g @ lam.lam_g + (r - x) @ lam.lam_rho
        worst = max(worst, float(np.max(L)))
    return max(0.0, worst - float(p_hat))


def semi_infinite_check(inst: RCPInstance, x, p, n_densities: int = 100, seed: int = 0) -> float:
    """Largest ``(x_i - E{zeta f_i})_+`` over sampled envelope densities plus the exact minimizer."""
    x = inst.check_x(x)
    F = inst.service_table(p)
    S = inst.scenarios
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, r in enumerate(inst.risks):
        dens = [sample_density(r, S, rng) for _ in range(n_densities)]
        dens.append(worst_case_density(r, S, F[i], "inf"))
        vals = weighted_sum(S.weights, np.array(dens) * F[i])
        worst = max(worst, float(np.max(x[i] - vals)))
    return max(0.0, worst)


@dataclass(frozen=True)
class ProbeRow:
    pair: int
    alpha: float
    m: int
    deficit: float


def closure_convexity_probe(inst: RCPInstance, n_pairs: int = 10,
                            alphas=(0.0, 0.25, 0.5, 0.75, 1.0), levels=(1, 2, 4, 8),
                            seed: int = 0, pointwise: bool = False) -> list[ProbeRow]:
    """Mixing deficits for random grid-policy pairs across ``alphas`` and refinement levels.

    For each pair and ``alpha`` the levels are processed in order and the
    subset found at one level seeds the search at the next, so deficits do not
    increase along the refinement chain.  ``pointwise`` replaces splicing by
    the pointwise combination ``alpha p + (1 - alpha) q`` (convex case).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for j in range(n_pairs):
        p = inst.random_grid_policy(rng)
        q = inst.random_grid_policy(rng)
        for a in alphas:
            a = float(a)
            prev, prev_m = None, None
            for m in levels:
                if pointwise:
                    mix = a * p + (1.0 - a) * q
                    d = float(np.max(mixture_risk_deficit(inst, p, q, a, mix)))
                else:
                    init = prev if prev_m and m % prev_m == 0 else None
                    res = mix_policies(inst, p, q, a, m, init=init, seed=seed + j)
                    d, prev, prev_m = res.epsilon, res.subset, m
                rows.append(ProbeRow(j, a, int(m), d))
    return rows


def probe_csv(rows: list[ProbeRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROBE_HEADER)
    for r in rows:
        w.writerow([r.pair, repr(r.alpha), r.m, repr(r.deficit)])
    return buf.getvalue()


# brute-force oracles ------------------------------------------------------

def _x_grid(inst: RCPInstance, points: int = 1000) -> np.ndarray:
    per = max(2, int(math.ceil(points ** (1.0 / inst.n))))
    axes = [np.linspace(lo, hi, per) for lo, hi in zip(inst.x_lower, inst.x_upper)]
    return np.array(list(itertools.product(*axes)))


def all_grid_policies(inst: RCPInstance, limit: int = 10**5):
    """Every grid policy as an option-index tuple, in lexicographic order."""
    sizes = [len(o) for o in inst.atom_options()]
    if math.prod(sizes) > limit:
        raise DomainError(f"{math.prod(sizes)} grid policies exceed the brute-force limit {limit}")
    return itertools.product(*(range(s) for s in sizes))


def brute_force_dual(inst: RCPInstance, lam, x_points: int = 1000) -> float:
    """``sup L`` over the full policy product grid and an ``x`` grid of about ``x_points`` points."""
    lam = _as_multipliers(inst, lam)
    xs = _x_grid(inst, x_points)
    best_x = float(np.max(x_objective(inst, lam, xs)))
    best_p = -np.inf
    for idx in all_grid_policies(inst):
        r = inst.risk_vector(inst.grid_policy(idx))
        best_p = max(best_p, math.fsum(lam.lam_rho * r))
    return best_x + best_p


def brute_force_primal(inst: RCPInstance) -> tuple[float, tuple | None]:
    """Best feasible objective over all grid policies (x chosen optimally for each)."""
    best, arg = -np.inf, None
    for idx in all_grid_policies(inst):
        r = inst.risk_vector(inst.grid_policy(idx))
        v = inst.best_x_for(r)[1]
        if v > best:
            best, arg = v, idx
    return float(best), arg


def enumerate_feasible_values(inst: RCPInstance) -> np.ndarray:
    """Objective values of every feasible ``(min(x_upper, r(p)), p)`` over grid policies."""
    out = []
    for idx in all_grid_policies(inst):
        v = inst.best_x_for(inst.risk_vector(inst.grid_policy(idx)))[1]
        if np.isfinite(v):
            out.append(v)
    return np.array(out)
