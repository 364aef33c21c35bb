import math

import numpy as np
import pytest

from oracles import cs_closed_array, hellinger_S, two_dirac_grid
from ubw1 import DiracInstance, catalog, phase_diagram, solve_dirac, tangent_split
from ubw1.dirac import intercept_for_length, pair_cost, transport_limits
from ubw1.errors import InfiniteCost, OutOfRange

HEL = catalog("hellinger")
CONVEX_MODELS = ("hellinger", "tv", "chi2", "jensen_shannon", "kl0", "kl1", "power(0.5)")
GRID_MODELS = ("hellinger", "tv", "chi2", "jensen_shannon")


def unit(L, ratio=1.0, disc=HEL):
    return DiracInstance(L, 1.0, 0.0, 0.0, ratio, disc)


def test_hellinger_reference_instance():
    sol = solve_dirac(unit(1.5))
    assert sol.regime == "interior"
    assert sol.a == pytest.approx(0.2, abs=1e-6)
    assert sol.b == pytest.approx(0.2, abs=1e-6)
    assert sol.alpha == pytest.approx(0.25, abs=1e-6)
    assert sol.beta == pytest.approx(4.0, abs=1e-5)
    assert sol.value == pytest.approx(1.0, abs=1e-9)
    assert sol.value == pytest.approx(pair_cost(unit(1.5), sol.a, sol.b), abs=1e-15)


@pytest.mark.parametrize("L", [0.5, 1.5, 3.0])
def test_hellinger_closed_form_split(L):
    S = hellinger_S(L)
    for ratio in (0.6, 1.0, 2.0):
        if not 1 / S < ratio < S:
            continue
        sol = solve_dirac(unit(L, ratio))
        assert sol.a == pytest.approx((S * ratio - 1) / (S**2 - 1), abs=1e-6)


def test_large_target_moves_everything_first():
    S = hellinger_S(1.5)
    for ratio in (S, 5.0, 20.0):
        sol = solve_dirac(unit(1.5, ratio))
        assert sol.a == pytest.approx(1.0, abs=1e-7)
        assert sol.b == pytest.approx(0.0, abs=1e-7)
        assert sol.regime == "boundary_b0"


def test_identical_configurations():
    for name in CONVEX_MODELS + ("exact",):
        sol = solve_dirac(DiracInstance(2.0, 1.0, 0.5, 1.0, 0.5, catalog(name)))
        assert (sol.a, sol.b, sol.value) == (0.0, 0.0, 0.0)


def test_mirrored_instance_is_flagged():
    forward = solve_dirac(unit(1.5))
    mirrored = solve_dirac(DiracInstance(1.5, 0.0, 1.0, 1.0, 0.0, HEL))
    assert mirrored.flipped and not forward.flipped
    assert mirrored.value == pytest.approx(forward.value, abs=1e-12)


def test_tangent_split_hellinger():
    s = intercept_for_length(HEL, 1.5)
    alpha, beta, length = tangent_split(HEL, s)
    assert alpha == pytest.approx(0.25, abs=1e-7)
    assert beta == pytest.approx(4.0, abs=1e-6)
    assert length == pytest.approx(1.5, abs=1e-9)


def test_tangent_split_near_zero_intercept():
    alpha, beta, length = tangent_split(HEL, -1e-10)
    assert alpha == pytest.approx(1.0, abs=1e-4)
    assert beta == pytest.approx(1.0, abs=1e-4)
    assert length <= 1e-4


def test_tangent_split_tv():
    tv = catalog("tv")
    for s in (-1e-6, -0.5, -1.0, -7.0):
        alpha, beta, length = tangent_split(tv, s)
        assert alpha == 0.0 and beta == math.inf
        # left tangent pivots on (0, 1), the right one is the slope-1 asymptote
        assert length == pytest.approx(2.0 - s, abs=1e-12)
    assert transport_limits(tv)[0] == pytest.approx(2.0, abs=1e-9)


def test_transport_limits():
    lmin, lmax = transport_limits(HEL)
    assert lmin == pytest.approx(0.0, abs=1e-6)
    assert lmax == math.inf


@pytest.mark.parametrize("name", CONVEX_MODELS)
def test_length_is_strictly_decreasing(name):
    disc = catalog(name)
    s = -np.logspace(-3, 1, 25)
    lengths = [tangent_split(disc, float(v))[2] for v in s]
    # s runs towards -inf, so L grows
    assert all(b > a for a, b in zip(lengths, lengths[1:]))


def test_tangent_split_rejects_nonnegative_intercept():
    with pytest.raises(OutOfRange):
        tangent_split(HEL, 0.0)
    with pytest.raises(OutOfRange):
        tangent_split(HEL, 0.3)


@pytest.mark.parametrize("name", CONVEX_MODELS)
def test_pair_cost_is_convex(name):
    disc = catalog(name)
    rng = np.random.default_rng(11)
    for _ in range(30):
        inst = DiracInstance(rng.uniform(0.2, 3), *rng.uniform(0.1, 2, 4), disc)
        h = 1e-3
        x = rng.uniform([h, h], [inst.m00 - h, inst.m1L - h])
        d = rng.normal(size=2)
        d /= np.linalg.norm(d)
        lo, hi = x - h * d, x + h * d
        if np.any(lo < 0) or np.any(hi > [inst.m00, inst.m1L]):
            continue
        vals = [pair_cost(inst, *p) for p in (lo, x, hi)]
        if all(map(math.isfinite, vals)):
            assert vals[0] - 2 * vals[1] + vals[2] >= -1e-9


@pytest.mark.parametrize("name", ["hellinger", "chi2", "jensen_shannon", "kl1"])
def test_interior_optimum_is_stationary(name):
    disc = catalog(name)
    hits = 0
    for L in (0.3, 0.7, 1.2):
        for ratio in (0.8, 1.0, 1.5):
            inst = unit(L, ratio, disc)
            sol = solve_dirac(inst, with_limits=False)
            if sol.regime != "interior":
                continue
            hits += 1
            h = 1e-6
            ga = (pair_cost(inst, sol.a + h, sol.b) - pair_cost(inst, sol.a - h, sol.b)) / (2 * h)
            gb = (pair_cost(inst, sol.a, sol.b + h) - pair_cost(inst, sol.a, sol.b - h)) / (2 * h)
            assert abs(ga) <= 1e-6 * 10 and abs(gb) <= 1e-6 * 10
    assert hits > 0


@pytest.mark.parametrize("name", GRID_MODELS)
def test_grid_oracle_agreement(name):
    disc = catalog(name)
    cs = lambda a, b: cs_closed_array(name, a, b)  # noqa: E731
    rng = np.random.default_rng(7)
    for _ in range(100):
        L = float(rng.uniform(0.1, 3.0))
        masses = rng.uniform(0, 2, 4) * (rng.uniform(size=4) < 0.8)
        sol = solve_dirac(DiracInstance(L, *masses, disc), with_limits=False)
        ref = two_dirac_grid(cs, L, *masses)
        assert sol.value <= ref + 1e-6
        assert sol.value >= ref - 1e-4


def test_phase_diagram_examples():
    rows = dict(((r[0], r[1]), r[2]) for r in phase_diagram(HEL, [1.5], [0.1, 0.25, 1.0, 4.0, 5.0]))
    assert rows[(1.5, 5.0)] == "boundary_b0"
    assert rows[(1.5, 1.0)] == "interior"
    # ties at S(L) and 1/S(L) resolve to the boundary
    assert rows[(1.5, 4.0)] == "boundary_b0"
    assert rows[(1.5, 0.25)] != "interior"
    assert rows[(1.5, 0.1)] != "interior"


def test_phase_diagram_boundaries_follow_S():
    for L in (0.5, 2.0):
        S = hellinger_S(L)
        eps = 1e-4
        rows = phase_diagram(HEL, [L], [S * (1 - eps), S * (1 + eps), (1 + eps) / S, (1 - eps) / S])
        assert [r[2] == "interior" for r in rows] == [True, False, True, False]


def test_boundaries_stay_sharp_for_long_distances():
    # the interior split sits about 1e-8 from an edge here
    for L in (3.0, 5.0):
        S = hellinger_S(L)
        rows = phase_diagram(HEL, [L], [S - 1e-6, S + 1e-6, 1 / S + 1e-6, 1 / S - 1e-6])
        assert [r[2] for r in rows] == ["interior", "boundary_b0", "interior", "boundary_a0"]


def test_exact_model():
    exact = catalog("exact")
    sol = solve_dirac(DiracInstance(2.0, 1.0, 0.0, 0.0, 1.0, exact))
    assert sol.value == pytest.approx(2.0)
    with pytest.raises(InfiniteCost):
        solve_dirac(DiracInstance(2.0, 1.0, 0.0, 0.0, 2.0, exact))
