"""Finite, approximate time-sharing between two policies.

On an atomic scenario set an event cannot carry exactly a fraction ``alpha``
of every integral at once, but after refinement a subset of sub-atoms can
come close.  This module searches for such subsets and reports how far the
spliced policy's risk vector falls short of the convex combination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InadmissiblePolicy
from .model import RCPInstance, splice
from .probability import ScenarioSet, refine as refine_set, weighted_sum
from .risk import sample_density, worst_case_density

N_RANDOM_DENSITIES = 8


@dataclass(frozen=True)
class TestDensityFamily:
    """Densities ``zeta`` on a scenario set, each tied to one service component.

    ``component[j] == -1`` applies density ``j`` to every component.
    """

    __test__ = False  # not a pytest class

    densities: np.ndarray  # (M, K)
    component: np.ndarray  # (M,)

    def __post_init__(self):
        if self.densities.ndim != 2 or self.densities.shape[0] < 1:
            raise ValueError("a test family needs at least one density")

    @property
    def gamma(self) -> float:
        return float(np.max(np.abs(self.densities)))


@dataclass(frozen=True)
class MixingSet:
    indices: np.ndarray
    error: float
    size: int  # atoms in the refined set


@dataclass(frozen=True)
class MixResult:
    policy: np.ndarray
    epsilon: float
    subset: np.ndarray  # boolean mask over refined atoms
    instance: RCPInstance
    residual: float


def blackwell_halve(S: ScenarioSet, V, m: int = 1) -> MixingSet:
    """Subset of ``refine(S, m)`` whose integral of ``V`` is close to half the total.

    Greedy assignment in descending ``|w_k V_k|`` order, then single-toggle and
    pair-swap improvement.  The best prefix of the atom order is also tried,
    which bounds the error by ``max_k |w_k V_k| / 2``.
    """
    Sm = refine_set(S, m)
    V = np.repeat(np.asarray(V, dtype=float), m)
    if V.size != Sm.size:
        raise DomainError(f"V has {V.size // m} entries for K={S.size}")
    terms = Sm.weights * V
    half = weighted_sum(Sm.weights, V) / 2.0

    def err(mask):
        return abs(weighted_sum(mask.astype(float), terms) - half)

    mask = np.zeros(Sm.size, dtype=bool)
    acc = 0.0
    for k in np.argsort(-np.abs(terms), kind="stable"):
        if abs(acc + terms[k] - half) < abs(acc - half):
            mask[k] = True
            acc += terms[k]
    best = err(mask)
    improved = True
    while improved and best > 0.0:
        improved = False
        for k in range(Sm.size):
            mask[k] = ~mask[k]
            e = err(mask)
            if e < best:
                best, improved = e, True
            else:
                mask[k] = ~mask[k]
        if improved:
            continue
        ins, outs = np.flatnonzero(mask), np.flatnonzero(~mask)
        for a in ins:
            for b in outs:
                mask[a], mask[b] = False, True
                e = err(mask)
                if e < best:
                    best, improved = e, True
                    break
                mask[a], mask[b] = True, False
            if improved:
                break
    prefix = np.concatenate([[0.0], np.cumsum(terms)])
    j = int(np.argmin(np.abs(prefix - half)))
    pmask = np.arange(Sm.size) < j
    if err(pmask) < best:
        mask, best = pmask, err(pmask)
    return MixingSet(np.flatnonzero(mask), float(best), Sm.size)


def default_family(inst: RCPInstance, Fp: np.ndarray, Fq: np.ndarray, seed: int = 0
                   ) -> TestDensityFamily:
    """Worst-case (inf) densities of each risk at both policies, ``zeta = 1`` and
    eight seeded random admissible densities per component."""
    S = inst.scenarios
    rng = np.random.default_rng(seed)
    dens, comp = [np.ones(S.size)], [-1]
    for i, r in enumerate(inst.risks):
        for F in (Fp, Fq):
            dens.append(worst_case_density(r, S, F[i], "inf"))
            comp.append(i)
    for i, r in enumerate(inst.risks):
        for _ in range(N_RANDOM_DENSITIES):
            dens.append(sample_density(r, S, rng))
            comp.append(i)
    return TestDensityFamily(np.array(dens), np.array(comp))


def _stacked(S: ScenarioSet, T: TestDensityFamily, Fp: np.ndarray, Fq: np.ndarray) -> np.ndarray:
    """Per-atom contributions ``w_k zeta_k f_i(.)`` for both policies, rows scaled to unit mass."""
    rows = []
    n = Fp.shape[0]
    for zeta, c in zip(T.densities, T.component):
        for i in (range(n) if c < 0 else [c]):
            for F in (Fp, Fq):
                rows.append(S.weights * zeta * F[i])
    A = np.array(rows)
    scale = np.sum(np.abs(A), axis=1, keepdims=True)
    return A / np.where(scale > 0, scale, 1.0)


def round_fractional(U: np.ndarray, alpha: float) -> np.ndarray:
    """Subset ``E`` with ``sum_{k in E} U[:, k]`` close to ``alpha * sum_k U[:, k]``.

    Starts from the uniform fractional solution ``t = alpha`` and moves along
    null-space directions of ``U`` until at most ``rows(U)`` coordinates are
    fractional, then rounds those.  The error is at most half the sum of the
    column norms of the rounded coordinates.
    """
    d, K = U.shape
    t = np.full(K, float(alpha))
    tol = 1e-12
    while True:
        frac = np.flatnonzero((t > tol) & (t < 1 - tol))
        if frac.size <= d:
            break
        cols = frac[: d + 1]
        _, _, vt = np.linalg.svd(U[:, cols])
        direction = vt[-1]
        # largest step that keeps every chosen coordinate in [0, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(direction > 0, (1 - t[cols]) / direction,
                          np.where(direction < 0, -t[cols] / direction, np.inf))
        step = float(np.min(up))
        t[cols] = np.clip(t[cols] + step * direction, 0.0, 1.0)
        hit = cols[np.argmin(up)]
        t[hit] = 1.0 if direction[np.argmin(up)] > 0 else 0.0
    return t >= 0.5


def mixture_risk_deficit(inst: RCPInstance, p, q, alpha: float, p_mix) -> np.ndarray:
    """``(alpha r(p) + (1 - alpha) r(q) - r(p_mix))_+`` per component.

    ``p`` and ``q`` live on ``inst``; ``p_mix`` may live on any refinement.
    """
    p_mix = np.asarray(p_mix, dtype=float)
    if p_mix.ndim != 2 or p_mix.shape[0] % inst.size:
        raise DomainError(f"mixed policy has {p_mix.shape[0]} rows for K={inst.size}")
    fine = inst.refine(p_mix.shape[0] // inst.size)
    target = alpha * inst.risk_vector(p) + (1.0 - alpha) * inst.risk_vector(q)
    return np.maximum(target - fine.risk_vector(p_mix), 0.0)


def mix_policies(inst: RCPInstance, p, q, alpha: float, m: int = 1,
                 family: TestDensityFamily | None = None, init=None, seed: int = 0
                 ) -> MixResult:
    """Splice ``p`` (on a subset ``E``) and ``q`` (elsewhere) on ``refine(S, m)``.

    ``E`` is chosen to make every test integral ``E{1_E zeta f_i(p)}`` close to
    ``alpha E{zeta f_i(p)}`` and likewise for ``q``.  Start points are a greedy
    fill, null-space rounding of the ``zeta = 1`` and stacked targets, and the
    optional ``init`` mask; the best is then improved by toggles and swaps
    with a budget of ``10 K m`` evaluations, ranked by the actual deficit ``eps``
    and then by the test-integral residual.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    P = inst.check_policy(p)
    Q = inst.check_policy(q)
    fine = inst.refine(m)
    Pm, Qm = np.repeat(P, m, axis=0), np.repeat(Q, m, axis=0)
    K = fine.size
    if alpha in (0.0, 1.0):
        mask = np.full(K, alpha == 1.0)
        return MixResult(splice(Pm, Qm, mask), 0.0, mask, fine, 0.0)
    Fp, Fq = fine.service_table(Pm), fine.service_table(Qm)
    target_risk = alpha * inst.risk_vector(P) + (1.0 - alpha) * inst.risk_vector(Q)
    if family is None:
        family = default_family(fine, Fp, Fq, seed)
    elif family.densities.shape[1] != K:
        raise DomainError("test family does not match the refined scenario set")
    A = _stacked(fine.scenarios, family, Fp, Fq)
    goal = alpha * A.sum(axis=1)

    def score(masks: np.ndarray):
        # masks (B, K) -> eps (B,), residual (B,)
        Fmix = np.where(masks[:, None, :], Fp[None], Fq[None])
        eps = np.max(np.maximum(target_risk - fine.risk_vector_of_table(Fmix), 0.0), axis=1)
        res = np.max(np.abs(masks.astype(float) @ A.T - goal), axis=1)
        return eps, res

    starts = []
    mask = np.zeros(K, dtype=bool)
    acc = np.zeros(A.shape[0])
    for k in np.argsort(-np.linalg.norm(A, axis=0), kind="stable"):
        if np.linalg.norm(acc + A[:, k] - goal) < np.linalg.norm(acc - goal):
            mask[k] = True
            acc += A[:, k]
    starts.append(mask)
    diff = fine.scenarios.weights * (Fp - Fq)
    starts.append(round_fractional(diff, alpha))
    if A.shape[0] < K:
        starts.append(round_fractional(A, alpha))
    if init is not None:
        init = np.asarray(init, dtype=bool)
        if init.size != K:
            init = np.repeat(init, K // init.size)
        starts.append(init)
    starts = np.array(starts)
    eps, res = score(starts)
    j = min(range(len(starts)), key=lambda i: (eps[i], res[i]))
    mask, best = starts[j].copy(), (eps[j], res[j])

    budget = 10 * K
    while budget > 0 and best[0] > 0.0:
        flips = np.repeat(mask[None], K, axis=0)
        flips[np.arange(K), np.arange(K)] ^= True
        e, r = score(flips)
        budget -= K
        j = min(range(K), key=lambda i: (e[i], r[i]))
        if (e[j], r[j]) < best:
            mask, best = flips[j], (e[j], r[j])
            continue
        ins, outs = np.flatnonzero(mask), np.flatnonzero(~mask)
        if ins.size == 0 or outs.size == 0:
            break
        a, b = np.meshgrid(ins, outs, indexing="ij")
        a, b = a.ravel(), b.ravel()
        swaps = np.repeat(mask[None], a.size, axis=0)
        swaps[np.arange(a.size), a] = False
        swaps[np.arange(a.size), b] = True
        e, r = score(swaps)
        budget -= a.size
        j = min(range(a.size), key=lambda i: (e[i], r[i]))
        if (e[j], r[j]) < best:
            mask, best = swaps[j], (e[j], r[j])
        else:
            break
    p_mix = splice(Pm, Qm, mask)
    if not np.all(fine.policy_class.admissible(p_mix, fine.scenarios.points)):
        raise InadmissiblePolicy("spliced policy is not admissible")
    return MixResult(p_mix, float(best[0]), mask, fine, float(best[1]))
