"""Static unbalanced transport on a finite metric space.

The primal problem is linearised by replacing the per-point mass-change
cost with an epigraph variable bounded below by supporting hyperplanes of
the dual set.  Each LP solve gives a lower bound; the returned couplings are
priced exactly (upper bound) and the LP duals, projected onto the exact
feasible set, are priced exactly as well (lower bound).  Cuts are added at
the current mass ratios until the bracket closes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .discrepancy import LocalDiscrepancy, cs_eval, supporting_points, tangent_z
from .errors import InfeasibleModel, NotOptimalInput, SpaceMismatch
from .lp import LinearProgram, lp_solve
from .measures import Coupling, DiscreteMeasure, w1_distance

PARTITION_TOL = 1e-9
MASS_TOL = 1e-9

PLUS, MINUS, EQUAL = "plus", "minus", "equal"


@dataclass(frozen=True, eq=False)
class TransportSolution:
    rho0: DiscreteMeasure
    rho1: DiscreteMeasure
    pi0: Coupling
    pi1: Coupling
    rho0p: DiscreteMeasure
    rho1p: DiscreteMeasure
    alpha: np.ndarray
    beta: np.ndarray
    primal_value: float
    dual_value: float
    gap: float
    partition: tuple[str, ...]
    model: str = ""
    lp_value: float = math.nan
    rounds: int = 0
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def value(self) -> float:
        return self.primal_value


# -- exact pricing ------------------------------------------------------------------

def primal_objective(pi0: np.ndarray, pi1: np.ndarray, dist: np.ndarray, disc: LocalDiscrepancy) -> float:
    r0p = pi0.sum(axis=0)
    r1p = pi1.sum(axis=1)
    change = sum(cs_eval(disc, max(a, 0.0), max(b, 0.0)) for a, b in zip(r0p, r1p))
    return float(np.sum(dist * pi0) + change + np.sum(dist * pi1))


def project_potentials(
    alpha, beta, dist: np.ndarray, disc: LocalDiscrepancy, *, lift: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Map pointwise pairs to admissible 1-Lipschitz potentials.

    ``alpha`` is capped to the domain, ``beta`` is lowered to the boundary
    (or lifted onto it when ``lift``), then both are replaced by their
    distance envelopes ``min_y f(y) + d(x, y)``, which only lowers values.
    """
    h = disc.h_s
    a = np.array(alpha, dtype=float)
    b = np.array(beta, dtype=float)
    lo = h.domain_lo
    if math.isfinite(lo):
        cap = -lo if h.lo_closed else -lo - 1e-12 * max(1.0, abs(lo))
        a = np.minimum(a, cap)
    top = h(-a)
    b = top if lift else np.minimum(b, top)
    a = np.min(a[None, :] + dist, axis=1)
    b = np.min(b[None, :] + dist, axis=1)
    return a, b


def dual_objective(alpha, beta, rho0: DiscreteMeasure, rho1: DiscreteMeasure) -> float:
    w0, w1 = rho0.weights, rho1.weights
    a = np.where(w0 > 0, alpha, 0.0)
    b = np.where(w1 > 0, beta, 0.0)
    return float(a @ w0 + b @ w1)


def partition_of(r0p: np.ndarray, r1p: np.ndarray, tol: float = PARTITION_TOL) -> tuple[str, ...]:
    out = []
    for a, b in zip(r0p, r1p):
        out.append(PLUS if a < b - tol else MINUS if a > b + tol else EQUAL)
    return tuple(out)


def _is_exact(disc: LocalDiscrepancy) -> bool:
    h = disc.h_s
    return disc.name == "exact" or (h.fixed_hi == math.inf and h.fixed_lo == -math.inf)


def _assemble(rho0, rho1, pi0, pi1, alpha, beta, disc, *, lp_value=math.nan, rounds=0, notes=()):
    space = rho0.space
    dist = space.distances
    primal = primal_objective(pi0, pi1, dist, disc)
    dual = dual_objective(alpha, beta, rho0, rho1)
    r0p, r1p = pi0.sum(axis=0), pi1.sum(axis=1)
    return TransportSolution(
        rho0=rho0,
        rho1=rho1,
        pi0=Coupling(space, pi0),
        pi1=Coupling(space, pi1),
        rho0p=DiscreteMeasure(space, r0p),
        rho1p=DiscreteMeasure(space, r1p),
        alpha=np.asarray(alpha, dtype=float),
        beta=np.asarray(beta, dtype=float),
        primal_value=primal,
        dual_value=dual,
        gap=primal - dual,
        partition=partition_of(r0p, r1p),
        model=disc.name,
        lp_value=lp_value,
        rounds=rounds,
        notes=tuple(notes),
    )


# -- solver ------------------------------------------------------------------------

def _cut_lp(rho0, rho1, dist, cuts: np.ndarray) -> LinearProgram:
    n = dist.shape[0]
    nn = n * n
    nvar = 2 * nn + n
    k = cuts.shape[0]
    A = np.zeros((2 * n + n * k, nvar))
    b = np.zeros(2 * n + n * k)
    for i in range(n):
        A[i, i * n : (i + 1) * n] = 1.0  # row i of pi0
        A[n + i, nn + i : 2 * nn : n] = 1.0  # column i of pi1
    b[:n] = rho0.weights
    b[n : 2 * n] = rho1.weights
    row = 2 * n
    for z in range(n):
        for alpha_k, beta_k in cuts:
            A[row, z : nn : n] = alpha_k  # incoming pi0 mass at z
            A[row, nn + z * n : nn + (z + 1) * n] = beta_k  # outgoing pi1 mass at z
            A[row, 2 * nn + z] = -1.0
            row += 1
    c = np.concatenate([dist.reshape(-1), dist.reshape(-1), np.ones(n)])
    lb = np.concatenate([np.zeros(2 * nn), np.full(n, -np.inf)])
    return LinearProgram(c, A, b, ["="] * (2 * n) + ["<="] * (n * k), lb=lb)


def _initial_cuts(disc: LocalDiscrepancy, k_cuts: int) -> np.ndarray:
    pts = set(supporting_points(disc, k_cuts))
    h = disc.h_s
    for z in h.kinks:
        v = float(h(z))
        if math.isfinite(v):
            pts.add((-z, v))
    return np.array(sorted(pts), dtype=float)


# Ratio range for refinement cuts; pure creation/destruction uses the ends.
RATIO_CAP = 1e14


def _tangent_cut(disc: LocalDiscrepancy, gamma: float) -> tuple[float, float] | None:
    gamma = min(max(gamma, 1.0 / RATIO_CAP), RATIO_CAP)
    z = tangent_z(disc.h_s, gamma)
    if not math.isfinite(z):
        return None
    v = float(disc.h_s(z))
    return (-z, v) if math.isfinite(v) else None


def solve_static(
    rho0: DiscreteMeasure,
    rho1: DiscreteMeasure,
    disc: LocalDiscrepancy,
    k_cuts: int = 65,
    *,
    tol: float = 1e-8,
    max_rounds: int = 40,
    method: str = "highs",
) -> TransportSolution:
    """Minimise transport + mass change + transport over coupling pairs."""
    if not rho0.space.same_as(rho1.space):
        raise SpaceMismatch("measures live on different metric spaces")
    space = rho0.space
    n = space.n
    dist = space.distances
    m0, m1 = rho0.mass, rho1.mass

    if _is_exact(disc):
        if abs(m0 - m1) > MASS_TOL * max(1.0, m0):
            raise InfeasibleModel(f"model forbids mass change but masses are {m0!r} and {m1!r}")
        value, plan = w1_distance(rho0, rho1)
        pi0 = plan.matrix.copy()
        pi1 = np.diag(rho1.weights)
        pot = _w1_potential(rho0, rho1, dist)
        return _assemble(rho0, rho1, pi0, pi1, pot, -pot, disc, lp_value=value)

    if m0 == 0 and m1 == 0:
        z = np.zeros((n, n))
        return _assemble(rho0, rho1, z, z.copy(), np.zeros(n), np.zeros(n), disc, lp_value=0.0)

    cuts = _initial_cuts(disc, k_cuts)
    best = None
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        lp = _cut_lp(rho0, rho1, dist, cuts)
        res = lp_solve(lp, method=method)
        if res.status != "optimal":
            raise InfeasibleModel(f"cut LP is {res.status}")
        x = np.maximum(res.x, 0.0)
        pi0 = x[: n * n].reshape(n, n)
        pi1 = x[n * n : 2 * n * n].reshape(n, n)
        # cut multipliers give pointwise pairs in the convex hull of the cuts
        lam = np.maximum(-res.duals[2 * n :].reshape(n, -1), 0.0)
        tot = lam.sum(axis=1, keepdims=True)
        lam = np.divide(lam, tot, out=np.zeros_like(lam), where=tot > 0)
        u, v = project_potentials(lam @ cuts[:, 0], lam @ cuts[:, 1], dist, disc, lift=True)
        sol = _assemble(rho0, rho1, pi0, pi1, u, v, disc, lp_value=res.objective, rounds=rounds)
        if best is None or sol.gap < best.gap:
            best = sol
        if sol.gap <= tol * (1.0 + abs(sol.primal_value)):
            break
        new = []
        for a, b in zip(sol.rho0p.weights, sol.rho1p.weights):
            if a + b <= 0:
                continue
            cut = _tangent_cut(disc, b / a if a > 0 else math.inf)
            if cut is not None:
                new.append(cut)
        added = {c for c in new if not np.any(np.all(np.isclose(cuts, c, rtol=1e-13, atol=1e-15), axis=1))}
        if not added:
            break
        cuts = np.vstack([cuts, np.array(sorted(added))])
    return replace(best, rounds=rounds)


def _w1_potential(rho0: DiscreteMeasure, rho1: DiscreteMeasure, dist: np.ndarray) -> np.ndarray:
    """Kantorovich potential for the balanced problem via the LP duals."""
    n = dist.shape[0]
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n : (i + 1) * n] = 1.0
        rows[n + i, i::n] = 1.0
    w1 = rho1.weights * (rho0.mass / rho1.mass) if rho1.mass > 0 else rho1.weights
    res = lp_solve(LinearProgram(dist.reshape(-1), rows, np.concatenate([rho0.weights, w1]), ["="] * (2 * n)))
    u = res.duals[:n]
    u = np.min(u[None, :] + dist, axis=1)
    return u


# -- structure ----------------------------------------------------------------------

def _blocks(partition):
    lab = np.array(partition)
    return lab == PLUS, lab == MINUS, lab == EQUAL


def verify_structure(sol: TransportSolution, disc: LocalDiscrepancy, tol: float = 1e-6) -> list[str]:
    """Violations of the two necessary optimality conditions (empty when all hold)."""
    d = sol.pi0.space.distances
    p0, p1 = sol.pi0.matrix, sol.pi1.matrix
    plus, minus, _ = _blocks(sol.partition)
    scale = tol * max(1.0, sol.rho0.mass + sol.rho1.mass)
    out = []
    v = float(np.sum((d * p0)[:, minus]))
    if v > scale:
        out.append(f"condition I: pi0 transports into the shrinking region (cost {v:.3g})")
    v = float(np.sum((d * p1)[plus, :]))
    if v > scale:
        out.append(f"condition I: pi1 transports out of the growing region (cost {v:.3g})")
    v = float(np.sum(p0[np.ix_(plus, ~plus)]))
    if v > scale:
        out.append(f"condition II: pi0 moves mass from the growing region elsewhere ({v:.3g})")
    v = float(np.sum(p1[np.ix_(~minus, minus)]))
    if v > scale:
        out.append(f"condition II: pi1 moves mass into the shrinking region from elsewhere ({v:.3g})")
    return out


# Support patterns of the characterisation: per coupling, per (row, col) block,
# "any", "diag" or "zero".  Labels: P growing, E static, M shrinking.
_GENERAL = {
    "pi0": {"PP": "any", "EP": "any", "MP": "any", "EE": "any", "MM": "diag", "PE": "zero", "PM": "zero", "EM": "zero", "ME": "zero"},
    "pi1": {"MP": "any", "ME": "any", "MM": "any", "PP": "diag", "EE": "diag", "PE": "zero", "PM": "zero", "EP": "zero", "EM": "zero"},
}


def support_pattern(variant: str = "general") -> dict[str, dict[str, str]]:
    """Block pattern for ``general``, ``smooth``, ``disjoint``, ``tv`` or ``smooth_disjoint``."""
    pat = {k: dict(v) for k, v in _GENERAL.items()}
    if variant in ("smooth", "smooth_disjoint"):
        pat["pi0"]["EE"] = "diag"
    if variant in ("disjoint", "smooth_disjoint"):
        pat["pi0"]["PP"] = "zero"
        pat["pi1"]["MM"] = "zero"
    if variant == "smooth_disjoint":
        pat["pi0"]["EE"] = "zero"
        pat["pi1"]["EE"] = "zero"
    if variant == "tv":
        pat["pi0"]["PP"] = "diag"
        pat["pi1"]["MM"] = "diag"
    if variant not in ("general", "smooth", "disjoint", "tv", "smooth_disjoint"):
        raise ValueError(f"unknown pattern {variant!r}")
    return pat


def pattern_violations(sol: TransportSolution, variant: str = "general", tol: float = 1e-9) -> list[str]:
    plus, minus, equal = _blocks(sol.partition)
    masks = {"P": plus, "M": minus, "E": equal}
    scale = tol * max(1.0, sol.rho0.mass + sol.rho1.mass)
    out = []
    for name, mat in (("pi0", sol.pi0.matrix), ("pi1", sol.pi1.matrix)):
        for block, rule in support_pattern(variant)[name].items():
            sub = mat[np.ix_(masks[block[0]], masks[block[1]])]
            if rule == "zero":
                bad = float(sub.sum())
            elif rule == "diag":
                idx = np.nonzero(masks[block[0]])[0]
                jdx = np.nonzero(masks[block[1]])[0]
                off = idx[:, None] != jdx[None, :]
                bad = float(sub[off].sum())
            else:
                continue
            if bad > scale:
                out.append(f"{name}[{block}] should be {rule} (mass {bad:.3g})")
    return out


def _move_through_equal(p0, p1, part, disc_is_tv: bool) -> bool:
    """One rerouting pass; returns True if anything moved."""
    n = p0.shape[0]
    moved = False
    eps = 1e-15
    for y in range(n):
        if part[y] != EQUAL:
            continue
        # static point fed from a shrinking point: shrink there instead
        for x in range(n):
            if x == y or part[x] != MINUS or p0[x, y] <= eps:
                continue
            for w in range(n):
                if p0[x, y] <= eps:
                    break
                delta = min(p0[x, y], p1[y, w])
                if delta <= eps:
                    continue
                p0[x, y] -= delta
                p0[x, x] += delta
                p1[y, w] -= delta
                p1[x, w] += delta
                moved = True
        # static point passing mass on: send it directly
        for w in range(n):
            if w == y or p1[y, w] <= eps:
                continue
            for x in range(n):
                if p1[y, w] <= eps:
                    break
                delta = min(p0[x, y], p1[y, w])
                if delta <= eps:
                    continue
                p0[x, y] -= delta
                p0[x, w] += delta
                p1[y, w] -= delta
                p1[w, w] += delta
                moved = True
    if disc_is_tv:
        r0p, r1p = p0.sum(axis=0), p1.sum(axis=1)
        for x in range(n):
            if part[x] != PLUS:
                continue
            for y in range(n):
                if y == x or part[y] != PLUS or p0[x, y] <= eps:
                    continue
                room = r1p[x] - r0p[x]
                delta = min(p0[x, y], room)
                if delta <= eps:
                    continue
                p0[x, y] -= delta
                p0[x, x] += delta
                r0p[x] += delta
                r0p[y] -= delta
                moved = True
    return moved


def canonicalize(sol: TransportSolution, disc: LocalDiscrepancy, *, max_passes: int = 100) -> TransportSolution:
    """Reroute an optimal pair so its support matches the characterised pattern."""
    if sol.gap > 1e-5 * (1.0 + abs(sol.primal_value)):
        raise NotOptimalInput(f"duality gap {sol.gap:.3g} too large to canonicalise")
    p0 = sol.pi0.matrix.copy()
    p1 = sol.pi1.matrix.copy()
    dist = sol.pi0.space.distances
    before = sol.primal_value
    is_tv = disc.name == "tv"
    for _ in range(max_passes):
        part = partition_of(p0.sum(axis=0), p1.sum(axis=1))
        snap0, snap1 = p0.copy(), p1.copy()
        if not _move_through_equal(p0, p1, part, is_tv):
            break
        after = primal_objective(p0, p1, dist, disc)
        if after > before + 1e-9 * max(1.0, abs(before)):
            p0, p1 = snap0, snap1
            break
    p0[p0 < 1e-15] = 0.0
    p1[p1 < 1e-15] = 0.0
    out = _assemble(sol.rho0, sol.rho1, p0, p1, sol.alpha, sol.beta, disc, lp_value=sol.lp_value, rounds=sol.rounds)
    variant = "tv" if is_tv else "general"
    notes = tuple(pattern_violations(out, variant))
    return replace(out, notes=notes)


def max_transport_distances(disc: LocalDiscrepancy) -> tuple[float, float]:
    """Distance thresholds beyond which no mass is transported."""
    lo1, hi1 = disc.partial1_limits
    lo2, hi2 = disc.partial2_limits
    return _diff(hi1, lo1), _diff(hi2, lo2)


def _diff(a: float, b: float) -> float:
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return a - b
