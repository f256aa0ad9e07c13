import math

import numpy as np
import pytest

from ssadt.design import (PlanGrid, feasible_grid, optimize_design, optimize_designs, phi_of_omega1,
                          sensitivity_study, stability_study)
from ssadt.errors import DomainError, InfeasibleBudgetError
from ssadt.fisher import avar_quantile
from ssadt.model import CostModel, TestPlan, cost_of


@pytest.fixture(scope="module")
def grid():
    return feasible_grid(CostModel(1.9, 1.3, 53.0, 1500.0))


def test_grid_bounds(grid):
    cells = grid.cells()
    assert max(n for n, _, _ in cells) == 26
    assert max(f for n, f, _ in cells if n == 13) == 204
    assert dict(((n, f), M) for n, f, M in cells)[(13, 52)] == 7
    assert len(grid) == 5115


def test_grid_budget_and_maximality(grid):
    costs = CostModel(1.9, 1.3, 53.0, 1500.0)
    tc = cost_of(grid.n, grid.f, grid.M, costs)
    assert np.all(tc <= 1500.0 + 1e-9)
    # one more measurement would break the budget
    assert np.all(cost_of(grid.n, grid.f, grid.M + 1, costs) > 1500.0)
    assert np.all(grid.M >= 2)


def test_grid_errors():
    with pytest.raises(InfeasibleBudgetError):
        feasible_grid(CostModel(1.9, 1.3, 53.0, 10.0))
    with pytest.raises(DomainError):
        feasible_grid(CostModel(0.0, 1.3, 53.0, 1500.0))


def test_phi_returns_feasible_minimum(grid, cfg):
    value, plan = phi_of_omega1(0.0502, 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=grid)
    assert plan is not None and (plan.n, plan.f, plan.M) in set(grid.cells())
    assert value == pytest.approx(avar_quantile(plan, cfg.params, cfg.stress, cfg.D, 0.5).avar, rel=1e-8)
    # no cell of the grid beats it
    for n, f, M in [(13, 52, 7), (16, 8, 18), (12, 17, 18), (26, 1, 15)]:
        try:
            other = avar_quantile(TestPlan(n, f, M, 0.0502, cfg.D), cfg.params, cfg.stress, cfg.D, 0.5).avar
        except Exception:
            continue
        assert value <= other * (1 + 1e-12)


def test_phi_is_order_independent(grid, cfg):
    perm = np.random.default_rng(4).permutation(len(grid))
    shuffled = PlanGrid(grid.n[perm], grid.f[perm], grid.M[perm])
    a = phi_of_omega1(0.03, 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=grid)
    b = phi_of_omega1(0.03, 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=shuffled)
    assert a[0] == b[0] and a[1] == b[1]


def test_phi_unusable_threshold(grid, cfg):
    value, plan = phi_of_omega1(4.0, 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=grid)
    assert value == math.inf and plan is None
    with pytest.raises(DomainError):
        phi_of_omega1(5.0, 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=grid)


def test_refining_the_threshold_grid_never_hurts(grid, cfg):
    coarse = np.geomspace(1e-4 * cfg.D, 0.999 * cfg.D, 50)
    fine = np.geomspace(1e-4 * cfg.D, 0.999 * cfg.D, 99)
    assert np.allclose(fine[::2], coarse, rtol=1e-12)
    phi = lambda w: phi_of_omega1(float(w), 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=grid)[0]
    best_coarse = min(phi(w) for w in coarse[:40])
    best_fine = min(phi(w) for w in fine[:79])
    assert best_fine <= best_coarse


@pytest.fixture(scope="module")
def design_p(cfg):
    return optimize_designs([0.1, 0.5, 0.9], cfg.params, cfg.stress, cfg.costs, cfg.D)


def test_design_report(design_p, cfg):
    for r in design_p:
        plan = TestPlan(r.n_star, r.f_star, r.M_star, r.omega1_star, cfg.D)
        assert cost_of(plan.n, plan.f, plan.M, cfg.costs) <= cfg.costs.budget
        check = avar_quantile(plan, cfg.params, cfg.stress, cfg.D, r.p)
        assert r.avar_star == pytest.approx(check.avar, rel=1e-10)
        assert r.min_cv == pytest.approx(check.cv, rel=1e-10)
        assert 0 <= r.elevation_prob <= r.elevation_prob_Mf <= r.elevation_prob_T_hours <= 1
        assert r.grid_log and r.mapping_used == "scale"
        # the refined optimum is no worse than any logged coarse evaluation
        assert r.avar_star <= min(e[-1] for e in r.grid_log) * (1 + 1e-12)


def test_min_cv_decreasing_in_p(design_p):
    cvs = [r.min_cv for r in design_p]
    assert cvs[0] > cvs[1] > cvs[2]


def test_single_p_matches_batch(design_p, cfg):
    r = optimize_design(0.5, cfg.params, cfg.stress, cfg.costs, cfg.D)
    assert r.plan == design_p[1].plan and r.omega1_star == design_p[1].omega1_star


def test_elevation_probability_increases_with_n(cfg):
    from ssadt.design import _elevation_probs
    vals = [_elevation_probs(TestPlan(n, 52, 7, 0.0502, 5.0), cfg.params, cfg.stress, "scale")[0]
            for n in (1, 5, 13, 26)]
    assert np.all(np.diff(vals) > 0)


def test_sensitivity_records_failures(grid, cfg):
    rows = sensitivity_study([(0.0, 0.0, -1.5)], 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D)
    assert rows[0].report is None and rows[0].error
    assert rows[0].to_dict()["error"]


def test_stability_small(cfg):
    plan = TestPlan(13, 52, 7, 0.0502, 5.0)
    a = stability_study([plan], 100, 17, cfg.params, cfg.stress, workers=1)[0]
    b = stability_study([plan], 100, 17, cfg.params, cfg.stress, workers=1)[0]
    assert np.array_equal(a.bias, b.bias) and np.array_equal(a.mse, b.mse)
    assert np.all(a.mse >= a.bias**2)
    assert a.exclusion_rate < 0.01
    with pytest.raises(DomainError):
        stability_study([plan], 50, 17, cfg.params, cfg.stress)


@pytest.mark.xfail(strict=True, reason="faithful grid minimum at this threshold is (12, 17, 18), not (13, 52, 7)")
def test_phi_argmin_at_tabulated_threshold(grid, cfg):
    _, plan = phi_of_omega1(0.0502, 0.5, cfg.params, cfg.stress, cfg.costs, cfg.D, grid=grid)
    assert (plan.n, plan.f, plan.M) == (13, 52, 7)
