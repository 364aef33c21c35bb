import dataclasses
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import random_instance
from oracles import cs_closed, cs_closed_array, semicoupling_grid, two_dirac_grid
from ubw1 import (
    DiracInstance,
    DiscreteMeasure,
    MetricSpace,
    assemble_dynamic,
    catalog,
    continuity_residual,
    cs_eval,
    dual_potential,
    dynamic_catalog,
    mass_trajectory,
    semicoupling_cost,
    solve_dirac,
    solve_static,
)
from ubw1.dynamic import g_forward, g_inverse
from ubw1.errors import InfeasibleChange, InfeasiblePair, ModelMismatch

HEL_D = dynamic_catalog("hellinger")


def two_points(L, w0, w1, model="hellinger"):
    space = MetricSpace.line([0.0, L])
    return solve_static(DiscreteMeasure(space, w0), DiscreteMeasure(space, w1), catalog(model))


# -- single-point trajectories -----------------------------------------------------

def test_constant_trajectory():
    traj = mass_trajectory(HEL_D, 3.0, 3.0, 16)
    assert traj.cost == 0.0
    assert np.all(traj.masses == 3.0) and np.all(traj.rates == 0.0)


def test_hellinger_trajectory_is_a_square():
    traj = mass_trajectory(HEL_D, 1.0, 4.0, 256)
    assert traj.cost == pytest.approx(1.0, abs=1e-3)
    assert np.max(np.abs(traj.masses - (1 + traj.times) ** 2)) <= 1e-3
    assert traj.masses[0] == 1.0 and traj.masses[-1] == 4.0
    assert traj.cost <= cs_closed("hellinger", 1.0, 4.0) + traj.excess + 1e-12
    assert traj.grad_norm <= 1e-8


@pytest.mark.parametrize("steps", [2, 7, 64])
def test_tv_trajectory_pays_total_variation(steps):
    traj = mass_trajectory(dynamic_catalog("tv"), 2.0, 5.0, steps)
    assert traj.cost == pytest.approx(3.0, abs=1e-9)


@pytest.mark.parametrize("model,m0,m1", [("hellinger", 1.0, 4.0), ("hellinger", 2.5, 0.3), ("jensen_shannon", 0.5, 2.0)])
def test_discretization_error_shrinks(model, m0, m1):
    dp = dynamic_catalog(model)
    exact = cs_closed(model, m0, m1)
    errs = [abs(mass_trajectory(dp, m0, m1, n, extrapolate=False).cost - exact) for n in (8, 16, 32)]
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


def test_pwl_trajectory_matches_static_cost():
    params = (-2.0, -1.0, 2.0, 1.0, 2.0, 0.5)
    dp = dynamic_catalog("pwl", *params)
    disc = catalog("pwl", *params)
    for m0, m1 in [(1.0, 3.0), (2.0, 0.5), (1.0, 1.8)]:
        traj = mass_trajectory(dp, m0, m1, 64)
        exact = cs_eval(disc, m0, m1)
        assert exact - 1e-9 <= traj.cost <= exact + traj.excess + 1e-9
        assert traj.cost == pytest.approx(exact, abs=1e-2)


def test_exact_model_forbids_change():
    with pytest.raises(InfeasibleChange):
        mass_trajectory(dynamic_catalog("exact"), 1.0, 2.0, 8)
    assert mass_trajectory(dynamic_catalog("exact"), 2.0, 2.0, 8).cost == 0.0


# -- assembly ---------------------------------------------------------------------------

def test_assembly_of_identical_measures():
    sol = two_points(1.0, [1.0, 2.0], [1.0, 2.0])
    opt = assemble_dynamic(sol, HEL_D, 16)
    assert opt.total_cost == pytest.approx(0.0, abs=1e-12)
    assert opt.jump0.cost() == pytest.approx(0.0, abs=1e-12)
    assert continuity_residual(opt) <= 1e-10


def test_assembly_matches_two_site_solver():
    sol = two_points(1.5, [1.0, 0.0], [0.0, 1.0])
    opt = assemble_dynamic(sol, HEL_D, 128)
    ref = solve_dirac(DiracInstance(1.5, 1.0, 0.0, 0.0, 1.0, catalog("hellinger"))).value
    assert opt.total_cost == pytest.approx(ref, abs=2e-3)
    assert np.allclose(opt.jump0.matrix, sol.pi0.matrix) and np.allclose(opt.jump1.matrix, sol.pi1.matrix)


def test_tv_beyond_threshold_only_changes_mass():
    sol = two_points(3.0, [1.0, 0.0], [0.0, 1.0], "tv")
    opt = assemble_dynamic(sol, dynamic_catalog("tv"), 32)
    for pi in (opt.jump0.matrix, opt.jump1.matrix):
        assert np.sum(pi - np.diag(np.diag(pi))) <= 1e-9
    assert opt.total_cost == pytest.approx(2.0, abs=1e-9)
    assert sum(t.cost for t in opt.trajectories) == pytest.approx(2.0, abs=1e-9)


def test_model_mismatch():
    sol = two_points(1.5, [1.0, 0.0], [0.0, 1.0])
    with pytest.raises(ModelMismatch):
        assemble_dynamic(sol, dynamic_catalog("tv"), 16)


def test_continuity_residual():
    sol = two_points(1.5, [1.0, 0.0], [0.0, 1.0])
    opt = assemble_dynamic(sol, HEL_D, 256)
    mass = float(opt.rho0.sum() + opt.rho1.sum())
    assert continuity_residual(opt) <= 1e-6 * (1 + mass)
    # leak 0.1 of mass from the second half of one path without a matching rate
    traj = opt.trajectories[0]
    masses = traj.masses.copy()
    masses[masses.size // 2:] += 0.1
    leaky = dataclasses.replace(opt, trajectories=(dataclasses.replace(traj, masses=masses),) + opt.trajectories[1:])
    assert continuity_residual(leaky) >= 0.05


def _perturbed_cost(L, m00, m0L, x_end, y_end, a, b, tau):
    """Best Hellinger cost when the first jump happens at time ``tau`` instead of 0.

    Over a window of length ``tau`` the quadratic growth penalty costs ``c_S / tau``.
    """
    cs = lambda p, q: cs_closed("hellinger", max(p, 0.0), max(q, 0.0))  # noqa: E731

    def total(v):
        u, w = v
        if u < a or w < 0:
            return 1e9
        return (cs(m00, u) + cs(m0L, w)) / tau + (cs(u - a, x_end) + cs(w + a, y_end)) / (1 - tau)

    best = min(
        (minimize(total, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14}) for x0 in ([m00, m0L], [a + 0.01, 0.01])),
        key=lambda r: r.fun,
    )
    return L * (a + b) + best.fun


@pytest.mark.parametrize("L,w0,w1", [(1.5, [1.0, 0.0], [0.0, 1.0]), (0.8, [1.0, 0.3], [0.2, 1.5]), (1.0, [2.0, 0.0], [0.0, 1.0])])
def test_transport_only_at_the_ends(L, w0, w1):
    sol = two_points(L, w0, w1)
    opt = assemble_dynamic(sol, HEL_D, 128)
    a = sol.pi0.matrix[0, 1]
    b = sol.pi1.matrix[0, 1]
    assert a > 1e-3
    x_end, y_end = sol.rho1p.weights
    for tau in (0.25, 0.5, 0.75):
        assert _perturbed_cost(L, w0[0], w0[1], x_end, y_end, a, b, tau) > opt.total_cost + 1e-3


# -- dual potentials ---------------------------------------------------------------------

def test_zero_potential():
    surf = dual_potential(HEL_D, [0.0, 0.0], [0.0, 0.0])
    for t in np.linspace(0, 1, 5):
        assert np.all(surf.values(t) == 0.0)


def test_hellinger_potential_closed_form():
    surf = dual_potential(HEL_D, [-1.0], [0.5])
    for t in np.linspace(0, 1, 9):
        assert surf.time_eval(t, 0) == pytest.approx(1 / (1 + t), abs=1e-8)
    assert surf.time_eval(0.0, 0) == 1.0 and surf.time_eval(1.0, 0) == 0.5
    assert surf.feasibility_violation() <= 1e-7


@pytest.mark.parametrize("z", [-0.7, -0.2, 0.3, 1.0, 2.5])
def test_auxiliary_boundary_values(z):
    assert g_forward(HEL_D, 0.0, z) == pytest.approx(z, abs=1e-12)
    assert g_forward(HEL_D, 1.0, z) == pytest.approx(0.0, abs=1e-12)
    assert g_inverse(HEL_D, 0.0, z) == pytest.approx(0.0, abs=1e-12)
    assert g_inverse(HEL_D, 1.0, z) == pytest.approx(z, abs=1e-12)


def test_infeasible_pair_lists_points():
    with pytest.raises(InfeasiblePair) as info:
        dual_potential(HEL_D, [0.0, -1.0, 0.0], [0.0, 0.9, 0.2])
    assert "1" in str(info.value) and "2" in str(info.value)


@pytest.mark.parametrize("seed", range(4))
def test_primal_dual_sandwich(seed):
    rho0, rho1 = random_instance(seed)
    sol = solve_static(rho0, rho1, catalog("hellinger"))
    opt = assemble_dynamic(sol, HEL_D, 64)
    surf = dual_potential(HEL_D, sol.alpha, sol.beta)
    assert surf.feasibility_violation() <= 1e-7
    bound = float(surf.beta @ rho1.weights + surf.alpha @ rho0.weights)
    assert bound <= opt.total_cost + 1e-4
    assert bound == pytest.approx(opt.total_cost, abs=2e-3)


# -- semi-couplings ------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["hellinger", "tv", "chi2", "kl1"])
def test_zero_distance_is_local_cost(name):
    disc = catalog(name)
    primal, dual = semicoupling_cost(disc, 0.0, 1.3, 0.4)
    assert primal == pytest.approx(cs_eval(disc, 1.3, 0.4), abs=1e-6)
    assert primal >= dual - 1e-5


def test_tv_far_sites_destroy_and_create():
    primal, dual = semicoupling_cost(catalog("tv"), 10.0, 1.0, 1.0)
    assert primal == pytest.approx(2.0, abs=1e-6)
    assert dual == pytest.approx(2.0, abs=1e-6)
    assert semicoupling_grid(lambda p, q: abs(p - q), 10.0, 1.0, 1.0, n=101) == pytest.approx(2.0)


def test_hellinger_matches_two_site_solver():
    primal, dual = semicoupling_cost(catalog("hellinger"), 1.5, 1.0, 1.0)
    assert primal == pytest.approx(1.0, abs=1e-4)
    assert dual == pytest.approx(primal, abs=1e-5)
    cs = lambda p, q: cs_closed_array("hellinger", p, q)  # noqa: E731
    assert primal == pytest.approx(two_dirac_grid(cs, 1.5, 1.0, 0.0, 0.0, 1.0), abs=1e-4)


@pytest.mark.parametrize("name", ["hellinger", "chi2", "jensen_shannon"])
def test_semicoupling_against_grid(name):
    disc = catalog(name)
    rng = np.random.default_rng(5)
    for _ in range(3):
        dx, m0, m1 = rng.uniform(0.1, 2.0), rng.uniform(0.1, 2), rng.uniform(0.1, 2)
        primal, dual = semicoupling_cost(disc, dx, m0, m1)
        ref = semicoupling_grid(lambda p, q: cs_closed(name, p, q), dx, m0, m1, n=121)
        assert primal <= ref + 1e-9
        assert primal >= ref - 1e-3
        assert primal >= dual - 1e-5
        assert math.isfinite(dual)
