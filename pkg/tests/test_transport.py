import math

import numpy as np
import pytest

from conftest import random_instance
from oracles import cs_closed_array, flat_norm_dual, two_dirac_grid
from ubw1 import (
    DiscreteMeasure,
    MetricSpace,
    canonicalize,
    catalog,
    max_transport_distances,
    solve_static,
    verify_structure,
)
from ubw1.errors import InfeasibleModel, NotOptimalInput, SpaceMismatch
from ubw1.measures import marginals
from ubw1.transport import _assemble, pattern_violations, primal_objective

SYMMETRIC = ("tv", "hellinger", "jensen_shannon", "chi2")


def pair(space, w0, w1):
    return DiscreteMeasure(space, w0), DiscreteMeasure(space, w1)


def test_identical_measures():
    space = MetricSpace.line([0, 1, 3])
    rho0, rho1 = pair(space, [1, 2, 0.5], [1, 2, 0.5])
    sol = solve_static(rho0, rho1, catalog("hellinger"))
    assert sol.primal_value == pytest.approx(0.0, abs=1e-12)
    for pi in (sol.pi0.matrix, sol.pi1.matrix):
        assert np.allclose(pi, np.diag([1, 2, 0.5]), atol=1e-9)


def test_single_point_is_pure_mass_change():
    space = MetricSpace.line([0.0])
    sol = solve_static(*pair(space, [2.0], [3.0]), catalog("hellinger"))
    assert sol.primal_value == pytest.approx((math.sqrt(2) - math.sqrt(3)) ** 2, abs=1e-7)
    assert sol.primal_value == pytest.approx(0.101021, abs=1e-6)


def test_flat_norm_beyond_threshold():
    space = MetricSpace.line([0, 3])
    sol = solve_static(*pair(space, [1, 0], [0, 1]), catalog("tv"))
    assert sol.primal_value == pytest.approx(2.0, abs=1e-9)


def test_two_point_hellinger_matches_closed_form():
    space = MetricSpace.line([0, 1.5])
    sol = solve_static(*pair(space, [1, 0], [0, 1]), catalog("hellinger"))
    # a = b = 0.2: 1.5 * 0.4 + 2 (sqrt(0.8) - sqrt(0.2))^2 = 1
    assert sol.primal_value == pytest.approx(1.0, abs=1e-5)
    cs = lambda a, b: cs_closed_array("hellinger", a, b)
    assert sol.primal_value == pytest.approx(two_dirac_grid(cs, 1.5, 1, 0, 0, 1), abs=1e-5)


@pytest.mark.parametrize("seed", range(10))
def test_flat_norm_matches_dual_lp(seed):
    rho0, rho1 = random_instance(seed)
    sol = solve_static(rho0, rho1, catalog("tv"))
    ref = flat_norm_dual(rho0.weights, rho1.weights, rho0.space.distances)
    assert sol.primal_value == pytest.approx(ref, abs=1e-7)


@pytest.mark.parametrize("model", ["hellinger", "jensen_shannon", "chi2", "tv", "kl1", "pwl(-2,-1,2,1,2,0.5)"])
@pytest.mark.parametrize("seed", range(6))
def test_solution_invariants(model, seed):
    rho0, rho1 = random_instance(seed)
    disc = catalog(model)
    sol = solve_static(rho0, rho1, disc)
    first, _ = marginals(sol.pi0)
    _, second = marginals(sol.pi1)
    assert np.allclose(first.weights, rho0.weights, atol=1e-7)
    assert np.allclose(second.weights, rho1.weights, atol=1e-7)
    assert sol.dual_value <= sol.primal_value + 1e-8
    assert sol.gap >= -1e-6
    assert sol.gap <= 1e-6 * (1 + abs(sol.primal_value))
    d = rho0.space.distances
    assert sol.primal_value == pytest.approx(primal_objective(sol.pi0.matrix, sol.pi1.matrix, d, disc), abs=1e-9)
    r0p, r1p = sol.rho0p.weights, sol.rho1p.weights
    for x, label in enumerate(sol.partition):
        expected = "plus" if r0p[x] < r1p[x] - 1e-9 else "minus" if r0p[x] > r1p[x] + 1e-9 else "equal"
        assert label == expected
    assert verify_structure(sol, disc) == []


@pytest.mark.parametrize("seed", range(8))
def test_flat_norm_depends_only_on_difference(seed):
    rho0, rho1 = random_instance(seed)
    sigma = np.random.default_rng(100 + seed).uniform(0, 1, rho0.space.n)
    disc = catalog("tv")
    base = solve_static(rho0, rho1, disc).primal_value
    shifted = solve_static(*pair(rho0.space, rho0.weights + sigma, rho1.weights + sigma), disc).primal_value
    assert shifted == pytest.approx(base, abs=1e-7)


@pytest.mark.parametrize("model", SYMMETRIC)
@pytest.mark.parametrize("seed", range(5))
def test_symmetric_models_give_symmetric_values(model, seed):
    rho0, rho1 = random_instance(seed)
    disc = catalog(model)
    ab = solve_static(rho0, rho1, disc).primal_value
    ba = solve_static(rho1, rho0, disc).primal_value
    assert ab == pytest.approx(ba, abs=1e-7)


def test_tv_far_apart_supports_stay_put():
    space = MetricSpace.line([0.0, 0.5, 3.0, 3.7])
    rho0, rho1 = pair(space, [1.0, 0.4, 0, 0], [0, 0, 0.8, 0.3])
    disc = catalog("tv")
    sol = canonicalize(solve_static(rho0, rho1, disc), disc)
    assert sol.primal_value == pytest.approx(2.5, abs=1e-9)
    for pi in (sol.pi0.matrix, sol.pi1.matrix):
        assert np.sum(pi - np.diag(np.diag(pi))) <= 1e-9


def test_diagonal_optimum_has_no_violations():
    space = MetricSpace.line([0, 10, 20])
    disc = catalog("hellinger")
    sol = solve_static(*pair(space, [1, 2, 0], [2, 1, 0.5]), disc)
    assert verify_structure(sol, disc) == []


def test_perturbed_coupling_is_flagged():
    space = MetricSpace.line([0, 1])
    disc = catalog("hellinger")
    rho0, rho1 = pair(space, [1, 2], [1.5, 0.5])
    sol = solve_static(rho0, rho1, disc)
    assert sol.partition == ("plus", "minus")
    p0 = np.array([[0.5, 0.5], [0.0, 2.0]])  # point 0 sends mass into the shrinking point
    p1 = sol.pi1.matrix
    bad = _assemble(rho0, rho1, p0, p1, sol.alpha, sol.beta, disc)
    problems = verify_structure(bad, disc)
    assert any(p.startswith("condition I") for p in problems)


def test_canonical_input_is_unchanged():
    space = MetricSpace.line([0, 1, 2, 3, 4])
    disc = catalog("tv")
    sol = solve_static(*pair(space, [1, 0.5, 0.5, 0, 0], [0, 0.5, 0.5, 1, 0]), disc)
    out = canonicalize(sol, disc)
    assert np.allclose(out.pi0.matrix, sol.pi0.matrix) and np.allclose(out.pi1.matrix, sol.pi1.matrix)
    assert out.primal_value == pytest.approx(sol.primal_value, abs=1e-12)


def chain_instance():
    """Transport 0 -> 1.5 routed through a static point at 0.5, plus a static and a growing point."""
    space = MetricSpace.line([0.0, 0.5, 1.0, 1.5, 5.0])
    rho0, rho1 = pair(space, [1.0, 0.0, 0.4, 0.0, 0.2], [0.0, 0.0, 0.4, 1.0, 0.6])
    disc = catalog("tv")
    opt = solve_static(rho0, rho1, disc)
    p0 = np.zeros((5, 5))
    p1 = np.zeros((5, 5))
    p0[0, 1] = 1.0
    p1[1, 3] = 1.0
    p0[2, 2] = p1[2, 2] = 0.4
    p0[4, 4] = 0.2
    p1[4, 4] = 0.6
    sol = _assemble(rho0, rho1, p0, p1, opt.alpha, opt.beta, disc)
    return sol, opt, disc


def test_chain_is_rerouted_to_the_pattern():
    sol, opt, disc = chain_instance()
    assert sol.primal_value == pytest.approx(opt.primal_value, abs=1e-9)
    assert pattern_violations(sol, "tv") != []
    out = canonicalize(sol, disc)
    assert out.primal_value <= sol.primal_value + 1e-9
    assert pattern_violations(out, "tv") == []
    assert out.notes == ()


@pytest.mark.parametrize("seed", range(8))
def test_disjoint_supports_leave_growing_rows_empty(seed):
    rng = np.random.default_rng(seed)
    n = 6
    space = MetricSpace(rng.uniform(0, 1, (n, 2)))
    mask = rng.uniform(size=n) < 0.5
    mask[0], mask[1] = True, False
    w0 = rng.uniform(0.2, 1, n) * mask
    w1 = rng.uniform(0.2, 1, n) * ~mask
    disc = catalog("hellinger")
    sol = canonicalize(solve_static(*pair(space, w0, w1), disc), disc)
    plus = np.array(sol.partition) == "plus"
    assert sol.pi0.matrix[plus, :].sum() <= 1e-9
    assert verify_structure(sol, disc) == []


def test_max_transport_distances():
    assert max_transport_distances(catalog("tv")) == (2.0, 2.0)
    assert max_transport_distances(catalog("hellinger")) == (math.inf, math.inf)
    assert max_transport_distances(catalog("exact")) == (math.inf, math.inf)
    # widths of the ranges of -argsup h_S over [-2, 2] and of h_S over [-3, 1.5]
    l0, l1 = max_transport_distances(catalog("pwl", -2, -1, 2, 1, 2, 0.5))
    assert l0 == pytest.approx(4.0) and l1 == pytest.approx(4.5)


def test_exact_model():
    space = MetricSpace.line([0, 2])
    disc = catalog("exact")
    sol = solve_static(*pair(space, [1, 0], [0, 1]), disc)
    assert sol.primal_value == pytest.approx(2.0)
    with pytest.raises(InfeasibleModel):
        solve_static(*pair(space, [1, 0], [0, 2]), disc)


def test_errors():
    a = DiscreteMeasure(MetricSpace.line([0, 1]), [1, 0])
    b = DiscreteMeasure(MetricSpace.line([0, 1, 2]), [0, 0, 1])
    with pytest.raises(SpaceMismatch):
        solve_static(a, b, catalog("hellinger"))
    sol = solve_static(a, DiscreteMeasure(a.space, [0, 1]), catalog("hellinger"))
    loose = _assemble(sol.rho0, sol.rho1, sol.pi0.matrix * 0 + np.diag([1, 0]), np.diag([0, 1]), np.zeros(2), np.zeros(2), catalog("hellinger"))
    assert loose.gap > 1e-5
    with pytest.raises(NotOptimalInput):
        canonicalize(loose, catalog("hellinger"))
