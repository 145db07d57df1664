import numpy as np
import pytest

from riskalloc import (PolicyClass, RiskSpec, TableService, Utility, build_instance, generate,
                       make_instance, make_scenario_set, solve_dual)
from riskalloc.certify import (GAP_HEADER, PROBE_HEADER, brute_force_primal,
                               closure_convexity_probe, gap_study, hyperplane_check,
                               probe_csv, semi_infinite_check)
from riskalloc.model import constraint_slack

from conftest import tiny_instance, toy_instance


def exclusive_services(risk):
    """One atom, two services; each grid policy serves exactly one of them."""
    svc = TableService([0.0, 1.0], [[[1.0, 0.0], [0.0, 1.0]]])
    S = make_scenario_set([[0.0]], [1.0])
    return make_instance(S, svc, risk, Utility("min"), 0.0, 1.0,
                         PolicyClass.uniform_box(1.0, 1, 2), verify_slater=False)


def test_toy_gap_closed():
    row = gap_study(toy_instance(), [1]).rows[0]
    assert row.gap_abs <= 1e-3 and row.primal == 1.0


def test_concave_instance_gap_closed():
    inst = build_instance(generate("concave-awgn", 2, seed=0))
    row = gap_study(inst, [1]).rows[0]
    assert row.gap_abs <= 1e-3 * max(1.0, abs(row.dual))


def test_outage_two_atoms_gap_trend():
    inst = build_instance(generate("outage", 2, seed=2))
    rows = gap_study(inst, [1, 8]).rows
    assert rows[1].gap_abs <= rows[0].gap_abs + 1e-9


def test_weak_duality_rows():
    for seed in range(3):
        for r in gap_study(tiny_instance(seed), [1, 2]).rows:
            assert r.dual >= r.primal - 1e-6


def test_gap_primal_matches_brute_force():
    for seed in range(4):
        inst = tiny_instance(seed)
        row = gap_study(inst, [1]).rows[0]
        assert row.primal == pytest.approx(brute_force_primal(inst)[0], abs=1e-9)


def test_expectation_time_sharing_closes_gap():
    rows = gap_study(exclusive_services(RiskSpec.expectation()), [1, 2, 4]).rows
    assert rows[0].primal == 0.0
    assert [r.primal for r in rows[1:]] == [0.5, 0.5]


def test_cvar_gap_persists_under_refinement():
    # lower CVaR(1/2) of an indicator with mass a is 2(a - 1/2)_+, so min over the two
    # services is 0 for every split, while the dual bound stays at 1/2
    rows = gap_study(exclusive_services(RiskSpec.cvar(0.5)), [1, 2, 4, 8]).rows
    for r in rows:
        assert r.primal == 0.0
        assert 0.5 - 1e-9 <= r.dual <= 0.55


def test_gap_csv_header_and_blank_runtime():
    text = gap_study(toy_instance(), [1, 2]).to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(GAP_HEADER)
    assert all(line.endswith(",") for line in lines[1:])


def test_gap_study_thread_independent():
    inst = build_instance(generate("outage", 2, seed=1))
    a = gap_study(inst, [1, 2, 4], threads=1).to_csv()
    b = gap_study(inst, [1, 2, 4], threads=3).to_csv()
    assert a == b


def test_levels_must_ascend():
    with pytest.raises(ValueError):
        gap_study(toy_instance(), [2, 1])


def test_hyperplane_examples():
    inst = toy_instance()
    assert hyperplane_check(inst, [1.0], 1.0) == 0.0
    assert hyperplane_check(inst, [0.0], 1.0) == 0.0
    assert hyperplane_check(inst, [0.0], 0.5) == pytest.approx(0.5)


def test_hyperplane_at_solver_output():
    inst = build_instance(generate("interference2", 2, seed=0))
    res = solve_dual(inst)
    assert hyperplane_check(inst, res.best_multipliers, res.best_dual, 2000) <= 1e-6


def test_semi_infinite_examples():
    inst = toy_instance()
    assert semi_infinite_check(inst, [0.5], [[1.0]]) == 0.0
    assert semi_infinite_check(inst, [1.0], [[0.0]]) == pytest.approx(1.0)


@pytest.mark.parametrize("family", ["interference2", "random-table", "outage"])
def test_semi_infinite_reproduces_slack(family):
    inst = build_instance(generate(family, 4, seed=5), verify_slater=False)
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = inst.random_grid_policy(rng)
        r = inst.risk_vector(p)
        x = np.clip(r + 0.1, inst.x_lower, inst.x_upper)
        slack = constraint_slack(inst, x, p)[0]
        want = max(0.0, float(-slack.min()))
        assert semi_infinite_check(inst, x, p, 50) == pytest.approx(want, abs=1e-9)


def test_probe_endpoints_and_csv():
    inst = build_instance(generate("interference2", 2, seed=1), verify_slater=False)
    rows = closure_convexity_probe(inst, n_pairs=3, levels=(1, 2))
    assert all(r.deficit == 0.0 for r in rows if r.alpha in (0.0, 1.0))
    assert probe_csv(rows).splitlines()[0] == ",".join(PROBE_HEADER)


def test_probe_pointwise_convex_case():
    inst = build_instance(generate("concave-awgn", 3, seed=0), verify_slater=False)
    rows = closure_convexity_probe(inst, n_pairs=4, levels=(1, 2), pointwise=True)
    assert max(r.deficit for r in rows) <= 1e-12


def test_probe_expectation_halving_bound():
    inst = build_instance(generate("outage", 3, seed=3), verify_slater=False)
    fmax = max(np.abs(v).max() for v in inst.option_values())
    for r in closure_convexity_probe(inst, n_pairs=4, levels=(1, 2, 4)):
        wmax = inst.refine(r.m).scenarios.weights.max()
        assert r.deficit <= wmax * fmax * inst.n + 1e-12
