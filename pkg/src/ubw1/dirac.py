"""Unbalanced transport between two sites carrying Dirac masses.

Mass ``a`` travels from site 0 to site ``L`` before the mass change and
``b`` after it.  The cost ``P(a, b)`` is convex on the box
``[0, m00] x [0, m1L]``; an interior optimum is found from the tangent
construction on ``gamma -> c_S(1, gamma)``, otherwise the box edges are
minimized directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .discrepancy import LocalDiscrepancy, cs_eval
from .errors import InfiniteCost, OutOfRange, ValidationError

BISECT_ITERS = 200
GAMMA_CAP = 1e16
INTERIOR_TOL = 1e-9
# closed-form splits come from a 2x2 solve, so only rounding needs absorbing
CLOSED_FORM_TOL = 1e-14


@dataclass(frozen=True)
class DiracInstance:
    L: float
    m00: float
    m0L: float
    m10: float
    m1L: float
    disc: LocalDiscrepancy

    def __post_init__(self):
        vals = (self.L, self.m00, self.m0L, self.m10, self.m1L)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("distance and masses must be finite")
        if self.L <= 0:
            raise ValidationError("site distance must be positive")
        if min(vals[1:]) < 0:
            raise ValidationError("masses must be nonnegative")


@dataclass
class DiracSolution:
    a: float
    b: float
    alpha: float
    beta: float
    s: float | None
    regime: str
    value: float
    unique: bool = True
    flipped: bool = False
    l_min: float = math.nan
    l_max: float = math.nan


def pair_cost(inst: DiracInstance, a: float, b: float) -> float:
    """``P(a, b)``: transport before and after plus the mass-change cost at both sites."""
    c = inst.disc
    return (
        inst.L * (a + b)
        + cs_eval(c, max(inst.m00 - a, 0.0), inst.m10 + b)
        + cs_eval(c, inst.m0L + a, max(inst.m1L - b, 0.0))
    )


# -- tangent construction ----------------------------------------------------------------

def _c1(disc: LocalDiscrepancy, g: float) -> float:
    return cs_eval(disc, 1.0, g)


def _intercept(disc: LocalDiscrepancy, g: float, side: int) -> float:
    """Value at 1 of the supporting line at ``g`` with the left (-1) or right (+1) slope."""
    c = _c1(disc, g)
    if not math.isfinite(c):
        return math.inf
    d = disc.derivative2(g)[0 if side < 0 else 1]
    return c + d * (1.0 - g)


def _intercept_upper(disc: LocalDiscrepancy, g: float) -> float:
    return _intercept(disc, g, 1 if g < 1 else -1)


def _intercept_lower(disc: LocalDiscrepancy, g: float) -> float:
    return _intercept(disc, g, -1 if g < 1 else 1)


def _bisect(pred, lo: float, hi: float) -> float:
    """Smallest point of ``[lo, hi]`` where the monotone predicate turns true."""
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _left_touch(disc: LocalDiscrepancy, s: float) -> tuple[float, float, bool]:
    """Touching ratio and slope of the left tangent through ``(1, s)``."""
    c0 = _c1(disc, 0.0)
    if math.isfinite(c0):
        dr0 = disc.partial2_limits[0]
        top = c0 + dr0 if math.isfinite(dr0) else -math.inf
        if top >= s:
            # pivots on the endpoint 0
            return 0.0, s - c0, True
    alpha = _bisect(lambda g: _intercept_upper(disc, g) >= s, 0.0, 1.0)
    alpha_hi = _bisect(lambda g: _intercept_lower(disc, g) > s, 0.0, 1.0)
    slope = (s - _c1(disc, alpha)) / (1.0 - alpha)
    return alpha, slope, alpha_hi - alpha <= 1e-9 * max(1.0, alpha)


def _right_touch(disc: LocalDiscrepancy, s: float) -> tuple[float, float, bool]:
    """Touching ratio and slope of the right tangent; ``inf`` when only asymptotic."""
    hi = 2.0
    while _intercept_lower(disc, hi) > s:
        hi *= 2.0
        if hi > GAMMA_CAP:
            return math.inf, disc.h_s.sup_value, True
    beta = _bisect(lambda g: _intercept_lower(disc, g) <= s, 1.0, hi)
    beta_hi = _bisect(lambda g: _intercept_upper(disc, g) < s, 1.0, hi)
    slope = (_c1(disc, beta) - s) / (beta - 1.0)
    return beta, slope, beta_hi - beta <= 1e-9 * max(1.0, beta)


def tangent_split(disc: LocalDiscrepancy, s: float) -> tuple[float, float, float]:
    """``(alpha, beta, L(s))`` for the tangents to ``c_S(1, .)`` through ``(1, s)``."""
    alpha, beta, length, _ = _tangent_split(disc, s)
    return alpha, beta, length


def _tangent_split(disc: LocalDiscrepancy, s: float) -> tuple[float, float, float, bool]:
    if not (math.isfinite(s) and s < 0):
        raise OutOfRange(f"tangent intercept must be a negative number, got {s!r}")
    dl, dr = disc.derivative2(1.0)
    if not (math.isfinite(dl) and math.isfinite(dr)):
        # any finite tangent is vertical at 1: no transport on both sides of a change
        return 1.0, 1.0, math.inf, True
    alpha, t_left, u1 = _left_touch(disc, s)
    beta, t_right, u2 = _right_touch(disc, s)
    return alpha, beta, t_right - t_left, u1 and u2


def _length_of(disc: LocalDiscrepancy, s: float) -> float:
    return _tangent_split(disc, s)[2]


def transport_limits(disc: LocalDiscrepancy) -> tuple[float, float]:
    """``(L_min, L_max)``: limits of ``L(s)`` as ``s -> 0-`` and ``s -> -inf``."""
    near = [_length_of(disc, -(10.0**-k)) for k in range(1, 9)]
    far = [_length_of(disc, -(10.0**k)) for k in range(0, 9)]
    if not math.isfinite(near[-1]):
        return math.inf, math.inf
    return max(_extrapolate(near), 0.0), _saturation(far)


def _extrapolate(seq: list[float]) -> float:
    """Aitken-style limit of a sequence whose increments shrink geometrically."""
    d1, d2 = seq[-2] - seq[-3], seq[-1] - seq[-2]
    if d1 == 0 or d2 == 0:
        return seq[-1]
    r = d2 / d1
    if not 0 < r < 1:
        return seq[-1]
    return seq[-1] + d2 * r / (1 - r)


def _saturation(seq: list[float]) -> float:
    # growth by roughly constant factors or increments means no finite limit
    d1, d2 = seq[-2] - seq[-3], seq[-1] - seq[-2]
    if d2 <= 1e-9 * max(1.0, abs(seq[-1])):
        return seq[-1]
    if d1 > 0 and d2 / d1 < 0.5:
        return _extrapolate(seq)
    return math.inf


def intercept_for_length(disc: LocalDiscrepancy, length: float) -> float | None:
    """Solve ``L(s) = length`` for ``s``; ``None`` if no negative intercept matches."""
    s_hi = -1e-14
    if _length_of(disc, s_hi) > length:
        return None
    s_lo = -1.0
    while _length_of(disc, s_lo) < length:
        s_lo *= 2.0
        if s_lo < -1e15:
            return None
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (s_lo + s_hi)
        if mid in (s_lo, s_hi):
            break
        if _length_of(disc, mid) >= length:
            s_lo = mid
        else:
            s_hi = mid
        if s_hi - s_lo <= 1e-15 * abs(s_lo):
            break
    return 0.5 * (s_lo + s_hi)


# -- solver ---------------------------------------------------------------------------------

def _resolve(inst: DiracInstance, alpha: float, beta: float) -> tuple[float, float]:
    u = alpha * inst.m00 - inst.m10
    if math.isinf(beta):
        return 0.0 if inst.m0L == 0 else -inst.m0L, u + alpha * inst.m0L
    v = beta * inst.m0L - inst.m1L
    det = beta - alpha
    return (-u - v) / det, (beta * u + alpha * v) / det


def _ratios(inst: DiracInstance, a: float, b: float) -> tuple[float, float]:
    def ratio(num, den):
        if den > 0:
            return num / den
        return math.inf if num > 0 else math.nan

    return ratio(inst.m10 + b, inst.m00 - a), ratio(inst.m1L - b, inst.m0L + a)


def _edge_minimum(f, lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return lo, f(lo)
    # P may be +inf at an end of the edge; Brent copes but warns on inf - inf
    with np.errstate(invalid="ignore"):
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(1.0, hi)})
    best = (float(res.x), float(res.fun))
    for x in (lo, hi):
        v = f(x)
        if v <= best[1] + 1e-14 * (1.0 + abs(best[1])):
            best = (x, v)
    return best


def _edges(inst: DiracInstance) -> list[tuple[str, float, float, float]]:
    """Minimizers on the four box edges, in tie-breaking order."""
    P = lambda a, b: pair_cost(inst, a, b)  # noqa: E731
    out = []
    b, v = _edge_minimum(lambda x: P(0.0, x), 0.0, inst.m1L)
    out.append(("boundary_a0", 0.0, b, v))
    a, v = _edge_minimum(lambda x: P(x, 0.0), 0.0, inst.m00)
    out.append(("boundary_b0", a, 0.0, v))
    b, v = _edge_minimum(lambda x: P(inst.m00, x), 0.0, inst.m1L)
    out.append(("boundary_other", inst.m00, b, v))
    a, v = _edge_minimum(lambda x: P(x, inst.m1L), 0.0, inst.m00)
    out.append(("boundary_other", a, inst.m1L, v))
    return out


def _label(inst: DiracInstance, a: float, b: float, rel_tol: float = INTERIOR_TOL) -> str:
    tol = rel_tol * max(1.0, inst.m00, inst.m1L)
    if a <= tol:
        return "boundary_a0"
    if b <= tol:
        return "boundary_b0"
    if a >= inst.m00 - tol or b >= inst.m1L - tol:
        return "boundary_other"
    return "interior"


def _swap(inst: DiracInstance) -> DiracInstance:
    return DiracInstance(inst.L, inst.m0L, inst.m00, inst.m1L, inst.m10, inst.disc)


def _solve_exact(inst: DiracInstance) -> DiracSolution:
    total0, total1 = inst.m00 + inst.m0L, inst.m10 + inst.m1L
    if abs(total0 - total1) > 1e-12 * max(1.0, total0):
        raise InfiniteCost("the exact model cannot change the total mass")
    moved = inst.m00 - inst.m10
    a, b = 0.0, moved
    alpha, beta = _ratios(inst, a, b)
    return DiracSolution(a, b, alpha, beta, None, "boundary_a0", inst.L * moved, unique=moved == 0,
                         l_min=math.inf, l_max=math.inf)


def solve_dirac(inst: DiracInstance, *, with_limits: bool = True) -> DiracSolution:
    disc = inst.disc
    if inst.m00 == inst.m10 and inst.m0L == inst.m1L:
        return DiracSolution(0.0, 0.0, 1.0, 1.0, None, "boundary_a0", 0.0)
    if disc.name == "exact":
        if inst.m00 < inst.m10:
            sol = _solve_exact(_swap(inst))
            sol.flipped = True
            return sol
        return _solve_exact(inst)
    standard = inst.m10 < inst.m00 and inst.m1L > inst.m0L
    mirrored = inst.m10 > inst.m00 and inst.m1L < inst.m0L
    if mirrored:
        sol = solve_dirac(_swap(inst), with_limits=with_limits)
        sol.flipped = True
        return sol
    if not standard:
        # no preferred direction: try both and keep the cheaper one
        forward = _solve_oriented(inst, with_limits)
        backward = _solve_oriented(_swap(inst), with_limits)
        backward.flipped = True
        return backward if backward.value < forward.value - 1e-12 * (1 + abs(forward.value)) else forward
    return _solve_oriented(inst, with_limits)


def _solve_oriented(inst: DiracInstance, with_limits: bool) -> DiracSolution:
    """Optimum among plans moving mass from site 0 towards site L only."""
    disc = inst.disc
    standard = inst.m10 < inst.m00 and inst.m1L > inst.m0L
    candidates: list[tuple[str, float, float, float, float | None, bool]] = []
    if standard:
        s = intercept_for_length(disc, inst.L)
        if s is not None:
            alpha, beta, _, unique = _tangent_split(disc, s)
            if beta > alpha:
                a, b = _resolve(inst, alpha, beta)
                if _label(inst, a, b, CLOSED_FORM_TOL) == "interior":
                    candidates.append(("interior", a, b, pair_cost(inst, a, b), s, unique))
    for regime, a, b, v in _edges(inst):
        candidates.append((regime, a, b, v, None, True))
    if not standard:
        # both sites move the same way: polish over the whole box
        best = min(candidates, key=lambda c: c[3])
        res = minimize(
            lambda x: pair_cost(inst, x[0], x[1]),
            x0=[best[1], best[2]],
            bounds=[(0.0, inst.m00), (0.0, inst.m1L)],
            method="L-BFGS-B",
        )
        if res.success and res.fun < best[3]:
            a, b = float(res.x[0]), float(res.x[1])
            candidates.append((_label(inst, a, b), a, b, float(res.fun), None, True))
    finite = [c for c in candidates if math.isfinite(c[3])]
    if not finite:
        raise InfiniteCost(f"{disc.name} forbids the required mass change")
    low = min(c[3] for c in finite)
    tie = 1e-12 * (1.0 + abs(low))
    regime, a, b, value, s, unique = next(c for c in finite if c[3] <= low + tie)
    if regime != "interior":
        regime = _label(inst, a, b) if _label(inst, a, b) != "interior" else "boundary_other"
    alpha, beta = _ratios(inst, a, b)
    sol = DiracSolution(a, b, alpha, beta, s, regime, value, unique)
    if with_limits:
        sol.l_min, sol.l_max = transport_limits(disc)
    return sol


def phase_diagram(disc: LocalDiscrepancy, L_grid, ratio_grid) -> list[tuple[float, float, str]]:
    """Regime of each ``(L, m1L/m00)`` cell for a unit Dirac moving to one target site."""
    rows = []
    for L in L_grid:
        for r in ratio_grid:
            sol = solve_dirac(DiracInstance(float(L), 1.0, 0.0, 0.0, float(r), disc), with_limits=False)
            rows.append((float(L), float(r), sol.regime))
    return rows
