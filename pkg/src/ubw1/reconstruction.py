"""Recover a growth profile from a static profile, and decide whether one exists.

For ``z`` above the largest fixed point of ``h_s`` the candidate profile is
the limit of ``q_j(z) = (h^j(z) - h^(j-1)(z)) / (h^j)'(z)`` scaled by a
constant that depends on the slope of ``h_s`` just right of that fixed
point.  Negative arguments use the mirrored profile.  The sequence is
nondecreasing in ``j``; when the slope at the fixed point is 1 it converges
like ``1/j`` and is accelerated by Richardson extrapolation at powers of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discrepancy import LocalDiscrepancy
from .errors import Inconclusive
from .flow import DynamicPenalty, cd_eval
from .hfunc import INF, NEG_INF, HFunction

SLOPE_ONE = 1 - 1e-4
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
# Stop iterating once consecutive iterates agree to this many ulps of |y|.
CANCEL_GUARD = 1e-7
WITNESS_RATIO = 1.004
WITNESS_STEP = 0.0025
# q near the fixed point is tiny, so a shorter run is accurate enough there
WITNESS_MAX_ITER = 2**14
WITNESS_TOL = 1e-6
WITNESS_WINDOW = 12.0
# past the uniform window, spacing grows geometrically up to this multiple of it
WITNESS_TAIL_RATIO = 1.002
WITNESS_TAIL_SPAN = 64.0


def scale_constant(m: float) -> float:
    """``1`` for unit slope, ``log m / (1 - 1/m)`` otherwise (``0`` in the limit m -> 0)."""
    if m >= SLOPE_ONE:
        return 1.0
    if m <= 0:
        return 0.0
    return math.log(m) / (1.0 - 1.0 / m)


@dataclass
class SideConstants:
    """Constants of one side: fixed point, end of the increasing part, slope, scale."""

    fixed: float
    end: float
    slope: float
    scale: float


def side_constants(h: HFunction) -> SideConstants:
    fixed = h.fixed_hi
    end = h.argsup
    if not math.isfinite(fixed):
        return SideConstants(fixed, end, 1.0, 1.0)
    slope = float(h.deriv_right(fixed)) if h.dright is not None else _slope_estimate(h, fixed)
    slope = min(max(slope, 0.0), 1.0)
    return SideConstants(fixed, end, slope, scale_constant(slope))


def _slope_estimate(h: HFunction, z: float) -> float:
    # one-sided quotients at 1e-4, 1e-5, 1e-6 with one Richardson step
    qs = [(float(h(z + e)) - z) / e for e in (1e-4, 1e-5, 1e-6)]
    return qs[2] + (qs[2] - qs[1]) / 9.0


@dataclass
class IterationResult:
    values: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    monotone_violations: int
    degenerate: np.ndarray


def iterate_quotients(
    h: HFunction,
    z: np.ndarray,
    slow: bool,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    anchor: float = 0.0,
) -> IterationResult:
    """Limit of ``(h^j - h^(j-1)) / (h^j)'`` at each point (unscaled).

    ``slow`` selects two levels of Richardson extrapolation at ``j = 2^k``,
    removing the ``1/j`` and ``1/j^2`` error terms.  Iteration also stops once
    successive extrapolated values drift apart again, which marks the rounding
    floor.  Convergence is only tested once an iterate has covered 7/8 of its
    distance to ``anchor``; before that the quotients barely move.
    """
    func = h.func
    dleft = h.dleft if h.dleft is not None else h.deriv_left
    n = z.size
    est = np.full(n, np.nan)
    iters = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    degenerate = np.zeros(n, dtype=bool)
    violations = 0

    # state of the still-active points
    idx = np.arange(n)
    z0 = z.astype(float).copy()
    y = z0.copy()
    dprod = np.ones(n)
    q = np.full(n, NEG_INF)
    q_half = np.full(n, np.nan)
    r1_half = np.full(n, np.nan)
    rich_prev = np.full(n, np.nan)
    gap_prev = np.full(n, np.inf)
    best = np.full(n, np.nan)
    checkpoint = 1
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for j in range(1, max_iter + 1):
            ynew = np.asarray(func(y), dtype=float)
            dprod = dprod * np.asarray(dleft(y), dtype=float)
            qnew = (ynew - y) / dprod
            violations += int(np.count_nonzero(qnew < q - 1e-9 * np.maximum(1.0, np.abs(q))))
            step = ynew - y
            y = ynew
            if slow:
                q = qnew
                under = dprod == 0
                if j != checkpoint and not under.any():
                    continue
                finished = under.copy()
                best = np.where(under & np.isnan(best), q, best)
                if j == checkpoint:
                    r1 = np.where(np.isnan(q_half), q, 2 * q - q_half)
                    rich = np.where(np.isnan(r1_half), r1, (4 * r1 - r1_half) / 3)
                    gap = np.abs(rich - rich_prev)
                    scale = np.maximum(np.abs(rich), 1e-3)
                    moved = np.abs(y - anchor) <= np.abs(z0 - anchor) / 8
                    ok = (gap <= tol * scale) & moved
                    # growing gaps near the tolerance mark the rounding floor
                    floor = (gap > gap_prev) & (gap_prev <= 1e3 * tol * scale) & moved
                    best = np.where(under, best, np.where(floor, rich_prev, rich))
                    ok |= floor
                    tiny = np.abs(step) <= CANCEL_GUARD * np.maximum(np.abs(y), 1e-300)
                    finished |= ok | tiny
                    done[idx[ok & ~under]] = True
                    gap_prev, rich_prev, q_half, r1_half = gap, rich, q, r1
                    checkpoint *= 2
            else:
                ok = np.abs(qnew - q) <= tol * np.abs(qnew)
                q = qnew
                under = dprod == 0
                best = np.where(under, np.where(np.isnan(best), q, best), q)
                tiny = np.abs(step) <= CANCEL_GUARD * np.maximum(np.abs(y), 1e-300)
                finished = ok | tiny | under
                done[idx[ok & ~under]] = True
                if not finished.any():
                    continue
            degenerate[idx[under]] = True
            iters[idx[finished]] = j
            est[idx[finished]] = best[finished]
            keep = ~finished
            if not keep.any():
                idx = idx[keep]
                break
            idx = idx[keep]
            z0, y, dprod, q = z0[keep], y[keep], dprod[keep], q[keep]
            q_half, r1_half, rich_prev, gap_prev, best = (
                q_half[keep], r1_half[keep], rich_prev[keep], gap_prev[keep], best[keep]
            )
    if idx.size:
        iters[idx] = max_iter
        est[idx] = np.where(np.isnan(best), q, best)
    return IterationResult(est, iters, done, violations, degenerate)


@dataclass
class ReconstructionReport:
    disc: LocalDiscrepancy
    z: np.ndarray
    q_values: np.ndarray
    q: HFunction
    d_lo: float
    d_hi: float
    zeta_lo: float
    zeta_hi: float
    m_lo: float
    m_hi: float
    c_lo: float
    c_hi: float
    concave: bool
    necessary_ok: bool
    sufficient_ok: bool
    iterations_used: np.ndarray
    converged: np.ndarray
    monotone_violations: int = 0
    failures: dict = field(default_factory=dict)
    details: str = ""

    @property
    def converged_fraction(self) -> float:
        return float(np.mean(self.converged)) if self.converged.size else 1.0


def q_values(
    disc: LocalDiscrepancy, z, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, dict]:
    """``q[h_s]`` on arbitrary points; returns values, iterations, convergence flags, violations, failures."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    pos_c = side_constants(disc.h_s)
    neg_c = side_constants(disc.h_bar_s)
    out = np.zeros(z.size)
    iters = np.zeros(z.size, dtype=int)
    conv = np.ones(z.size, dtype=bool)
    failures: dict = {}
    violations = 0
    for sign, hf, c in ((+1, disc.h_s, pos_c), (-1, disc.h_bar_s, neg_c)):
        w = sign * z
        side = (w > 0) if sign > 0 else (w > 0)
        if sign > 0:
            side = z >= 0
        else:
            side = z < 0
        ws = w[side]
        vals = np.zeros(ws.size)
        outside = ws > c.end
        vals[outside] = NEG_INF
        at_end = ws == c.end
        inner = (ws > c.fixed) & ~outside
        if np.any(at_end) and math.isfinite(c.end) and c.end > c.fixed:
            if float(hf.deriv_left(c.end)) == 0.0:
                vals[at_end] = NEG_INF
                inner &= ~at_end
        idx = np.nonzero(inner)[0]
        it = np.zeros(ws.size, dtype=int)
        cv = np.ones(ws.size, dtype=bool)
        if idx.size:
            res = iterate_quotients(hf, ws[idx], c.slope >= SLOPE_ONE, tol, max_iter, anchor=c.fixed)
            vals[idx] = c.scale * res.values
            it[idx] = res.iterations
            cv[idx] = res.converged
            violations += res.monotone_violations
            for k in np.nonzero(res.degenerate)[0]:
                failures[float(sign * ws[idx[k]])] = "DegenerateSlope"
            for k in np.nonzero(~res.converged & ~res.degenerate)[0]:
                failures[float(sign * ws[idx[k]])] = "NonConvergence"
        out[side] = vals
        iters[side] = it
        conv[side] = cv
    out[z == 0] = 0.0
    return out, iters, conv, violations, failures


def _witness_nodes(d_lo: float, d_hi: float, zeta_lo: float, zeta_hi: float) -> np.ndarray:
    """Nodes spaced geometrically away from the zero set, so chord errors stay relative."""
    lo = d_lo if math.isfinite(d_lo) else -WITNESS_WINDOW
    hi = d_hi if math.isfinite(d_hi) else WITNESS_WINDOW
    nodes = [np.array([lo, hi, 0.0])]
    for anchor, end, sign in ((zeta_hi, hi, 1.0), (zeta_lo, lo, -1.0)):
        if not math.isfinite(anchor):
            continue
        span = (end - anchor) * sign
        nodes.append(np.array([anchor]))
        if span <= 0:
            continue
        first = 1e-3 * max(1.0, abs(anchor))
        # geometric until the spacing reaches WITNESS_STEP, uniform after that
        knee = WITNESS_STEP / (WITNESS_RATIO - 1.0)
        count = int(math.ceil(math.log(max(min(span, knee) / first, 1.0)) / math.log(WITNESS_RATIO))) + 1
        offsets = first * WITNESS_RATIO ** np.arange(count)
        if span > offsets[-1]:
            offsets = np.concatenate([offsets, np.arange(offsets[-1] + WITNESS_STEP, span, WITNESS_STEP)])
        nodes.append(anchor + sign * offsets[offsets < span])
    tail = WITNESS_WINDOW * WITNESS_TAIL_RATIO ** np.arange(1, int(math.log(WITNESS_TAIL_SPAN) / math.log(WITNESS_TAIL_RATIO)) + 1)
    if not math.isfinite(d_lo):
        nodes.append(-tail)
        lo = -tail[-1]
    if not math.isfinite(d_hi):
        nodes.append(tail)
        hi = tail[-1]
    grid = np.unique(np.concatenate(nodes))
    return grid[(grid >= lo) & (grid <= hi)]


def _witness(disc: LocalDiscrepancy, d_lo: float, d_hi: float, zeta_lo: float, zeta_hi: float, tol: float, max_iter: int) -> HFunction:
    """Piecewise-linear sample of ``q`` with linear extension past the window."""
    grid = _witness_nodes(d_lo, d_hi, zeta_lo, zeta_hi)
    vals, *_ = q_values(disc, grid, max(tol, WITNESS_TOL), min(max_iter, WITNESS_MAX_ITER))
    finite = np.isfinite(vals)
    grid, vals = grid[finite], vals[finite]
    if grid.size == 1:
        return HFunction.piecewise_linear([0.0], [0.0], slope_left=0.0, slope_right=0.0, kind="sampled", tag="q")
    return HFunction.piecewise_linear(
        grid,
        vals,
        extend_left=not math.isfinite(d_lo),
        extend_right=not math.isfinite(d_hi),
        kind="sampled",
        tag=f"q[{disc.name}]",
    )


def reconstruct(
    disc: LocalDiscrepancy,
    grid=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ReconstructionReport:
    pos_c = side_constants(disc.h_s)
    neg_c = side_constants(disc.h_bar_s)
    d_hi, d_lo = pos_c.end, -neg_c.end
    if grid is None:
        lo = d_lo if math.isfinite(d_lo) else -5.0
        hi = d_hi if math.isfinite(d_hi) else 5.0
        grid = np.linspace(lo, hi, 257)
    z = np.unique(np.concatenate([np.asarray(grid, dtype=float).reshape(-1), [0.0]]))
    vals, iters, conv, violations, failures = q_values(disc, z, tol, max_iter)
    witness = _witness(disc, d_lo, d_hi, -neg_c.fixed, pos_c.fixed, tol, max_iter)
    necessary, sufficient, details = check_conditions(disc)
    concave = _midpoint_concave(z, vals)
    return ReconstructionReport(
        disc=disc,
        z=z,
        q_values=vals,
        q=witness,
        d_lo=d_lo,
        d_hi=d_hi,
        zeta_lo=-neg_c.fixed,
        zeta_hi=pos_c.fixed,
        m_lo=neg_c.slope,
        m_hi=pos_c.slope,
        c_lo=neg_c.scale,
        c_hi=pos_c.scale,
        concave=concave,
        necessary_ok=necessary,
        sufficient_ok=sufficient,
        iterations_used=iters,
        converged=conv,
        monotone_violations=violations,
        failures=failures,
        details=details,
    )


def _midpoint_concave(z: np.ndarray, q: np.ndarray, rel: float = 1e-6) -> bool:
    return not _concavity_failures(z, q, rel)


def _concavity_failures(z: np.ndarray, q: np.ndarray, rel: float = 1e-6) -> list[tuple[float, float]]:
    """Pairs on a uniform mesh whose midpoint value falls below the chord."""
    fin = np.isfinite(q)
    idx = np.nonzero(fin)[0]
    if idx.size < 3:
        return []
    # boundary points next to -inf are excluded
    keep = idx[(idx > idx[0]) | (idx[0] == 0)]
    keep = keep[(keep < idx[-1]) | (idx[-1] == q.size - 1)]
    zs, qs = z[keep], q[keep]
    bad = []
    n = zs.size
    for i in range(n):
        k = np.arange(i + 2, n, 2)
        mid = (i + k) // 2
        chord = 0.5 * (qs[i] + qs[k])
        scale = 1.0 + np.maximum(np.abs(qs[i]), np.abs(qs[k]))
        fail = qs[mid] < chord - rel * scale
        for kk in k[fail]:
            bad.append((float(zs[i]), float(zs[kk])))
    return bad


def decide_dynamic(
    report: ReconstructionReport, concavity_grid: int = 257
) -> tuple[bool, DynamicPenalty | None]:
    """Whether a growth profile exists, with the reconstructed one as witness."""
    if report.converged_fraction < 0.9:
        raise Inconclusive(f"only {report.converged_fraction:.0%} of grid points converged")
    lo = report.d_lo if math.isfinite(report.d_lo) else -5.0
    hi = report.d_hi if math.isfinite(report.d_hi) else 5.0
    mesh = np.linspace(lo, hi, concavity_grid)
    vals, _, conv, _, failures = q_values(report.disc, mesh)
    bad = _concavity_failures(mesh, vals)
    if bad and failures:
        # violations only where the iteration failed are not trustworthy
        unconverged = np.array(sorted(failures))
        near = all(np.min(np.abs(unconverged - 0.5 * (a + b))) < 2 * (hi - lo) / concavity_grid for a, b in bad)
        if near:
            raise Inconclusive("concavity violations coincide with unconverged points")
    if bad:
        return False, None
    return True, DynamicPenalty(report.q, f"q[{report.disc.name}]")


def check_conditions(disc: LocalDiscrepancy) -> tuple[bool, bool, str]:
    """Necessary (no derivative jumps past the fixed point) and sufficient (convex 1/h') checks."""
    notes = []
    necessary = True
    sufficient = True
    for label, hf in (("h_s", disc.h_s), ("mirror", disc.h_bar_s)):
        c = side_constants(hf)
        lo, hi = c.fixed, c.end
        if math.isfinite(lo) and hi > lo:
            top = hi if math.isfinite(hi) else lo + 10.0
            pts = np.linspace(lo, top, 130)[1:-1]
            pts = np.unique(np.concatenate([pts, [k for k in hf.kinks if lo < k < top]]))
            eps = 1e-7 * np.maximum(1.0, np.abs(pts))
            f0 = hf(pts)
            dl = (f0 - hf(pts - eps)) / eps
            dr = (hf(pts + eps) - f0) / eps
            jump = np.abs(dr - dl) > 1e-3 * np.maximum(np.abs(dl), 1e-12)
            if np.any(jump):
                necessary = False
                notes.append(f"{label}: derivative jumps at z = {pts[jump][:3].round(6).tolist()}")
        top = min(hf.argsup, 10.0)
        grid = np.linspace(0.0, top, 129)[:-1]
        with np.errstate(divide="ignore"):
            inv = 1.0 / hf.deriv_left(grid)
        inv = inv[np.isfinite(inv)]
        second = inv[:-2] - 2 * inv[1:-1] + inv[2:]
        if inv.size > 2 and np.any(second < -1e-8 * np.maximum(1.0, np.abs(inv[1:-1]))):
            sufficient = False
            notes.append(f"{label}: 1/h' is not convex on [0, {top:g})")
    return necessary, sufficient, "; ".join(notes) or "all checks passed"


def emit_profile(report: ReconstructionReport, z=None) -> list[tuple[float, float, float]]:
    """Rows ``(z, q(z), c_D(1, z))`` for plotting; always contains ``z = 0``."""
    zs = report.z if z is None else np.unique(np.concatenate([np.asarray(z, dtype=float), [0.0]]))
    if z is None:
        qs = report.q_values
    else:
        qs, *_ = q_values(report.disc, zs)
    dp = DynamicPenalty(report.q, f"q[{report.disc.name}]")
    rows = []
    for zz, qq in zip(zs, qs):
        rows.append((float(zz), float(qq), float(cd_eval(dp, 1.0, float(zz)))))
    return rows
