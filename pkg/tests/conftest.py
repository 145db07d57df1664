import numpy as np
import pytest

from riskalloc import (LinearService, PolicyClass, RiskSpec, Utility, make_instance,
                       make_scenario_set)


def toy_instance(x_witness=0.5, risk=None, verify_slater=True):
    """One atom, f = p on [0, 1], objective x on X = [0, 1]."""
    S = make_scenario_set([[1.0]], [1.0])
    return make_instance(S, LinearService(1), risk or RiskSpec.expectation(),
                         Utility.weighted_sum([1.0]), 0.0, 1.0,
                         PolicyClass.uniform_box(1.0, 1, 2),
                         witness=(x_witness, [[1.0]]), verify_slater=verify_slater)


def linear_instance(h, risk, resolution=2, upper=1.0, weights=None):
    h = np.asarray(h, dtype=float).reshape(-1, 1)
    w = weights or [1.0 / len(h)] * len(h)
    S = make_scenario_set(h, w)
    return make_instance(S, LinearService(1), risk, Utility.weighted_sum([1.0]), 0.0,
                         float(np.max(h)) * upper, PolicyClass.uniform_box(upper, 1, resolution),
                         verify_slater=False)


@pytest.fixture
def toy():
    return toy_instance()


def tiny_instance(seed, smooth=False):
    """Seeded nonconvex instance: K <= 5 atoms, scalar policy on 4 levels, table service.

    Objectives are piecewise linear so the x-supremum sits on the brute-force x-grid;
    ``smooth`` swaps in a log utility instead.
    """
    from riskalloc import TableService

    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 6))
    labels = rng.integers(0, 2, size=K).astype(float)[:, None]
    w = rng.dirichlet(np.ones(K))
    w = np.round(w / w.sum(), 12)
    w[-1] = 1.0 - np.sum(w[:-1])
    levels = [0.0, 1 / 3, 2 / 3, 1.0]
    values = rng.uniform(0.0, 2.0, size=(2, 4, 2))
    values[:, -1, :] += 0.2
    kind = ["expectation", "cvar", "mad"][seed % 3]
    risk = {"expectation": RiskSpec.expectation(), "cvar": RiskSpec.cvar(0.3 + 0.1 * (seed % 5)),
            "mad": RiskSpec.mad(0.25 + 0.25 * (seed % 4))}[kind]
    objective = [Utility.weighted_sum(rng.uniform(0.2, 1.5, 2)), Utility("min")][seed % 2]
    if smooth:
        objective = Utility.sum_log(0.5)
    return make_instance(make_scenario_set(labels, w), TableService(levels, values.tolist()),
                         risk, objective, 0.0, 2.0, PolicyClass.uniform_box(1.0, 1, 4),
                         verify_slater=False)


ACCEPTANCE = []


def record(criterion, ok, detail=""):
    ACCEPTANCE.append((criterion, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
