"""Dense linear programming core.

The default solver is a two-phase tableau simplex with Bland's rule, which
is deterministic and terminates on degenerate problems.  ``method="highs"``
delegates to scipy's HiGHS bindings for the larger cut LPs.

All problems are minimisations.  Row duals are reported as sensitivities
``d objective / d b_i`` in the orientation the row was given.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CycleGuardExceeded, ValidationError

MAX_PIVOTS = 1_000_000
PIVOT_TOL = 1e-11


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: list[str]
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.senses), 0))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        m = self.A.shape[0]
        if self.b.size != m or len(self.senses) != m:
            raise ValidationError("constraint dimensions disagree")
        if not np.all(np.isfinite(self.c)):
            raise ValidationError("objective coefficients must be finite")
        bad = set(self.senses) - {"<=", ">=", "=", "<", ">"}
        if bad:
            raise ValidationError(f"unknown row senses {bad}")
        self.senses = [{"<": "<=", ">": ">="}.get(s, s) for s in self.senses]
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)
        if self.lb.size != n or self.ub.size != n or np.any(self.lb > self.ub):
            raise ValidationError("variable bounds are inconsistent")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LPResult:
    status: str
    x: np.ndarray
    duals: np.ndarray
    objective: float
    pivots: int = 0
    info: dict = field(default_factory=dict)


def lp_solve(lp: LinearProgram, method: str = "simplex") -> LPResult:
    if method == "simplex":
        return _simplex(lp)
    if method == "highs":
        return _highs(lp)
    raise ValidationError(f"unknown LP method {method!r}")


# -- HiGHS -------------------------------------------------------------------------

def _highs(lp: LinearProgram) -> LPResult:
    from scipy.optimize import linprog

    senses = np.array(lp.senses)
    le, ge, eq = senses == "<=", senses == ">=", senses == "="
    A_ub = np.vstack([lp.A[le], -lp.A[ge]])
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]])
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(lp.lb, lp.ub)]
    res = linprog(
        lp.c,
        A_ub=A_ub if A_ub.size else None,
        b_ub=b_ub if A_ub.size else None,
        A_eq=lp.A[eq] if eq.any() else None,
        b_eq=lp.b[eq] if eq.any() else None,
        bounds=bounds,
        method="highs",
    )
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
    m = lp.A.shape[0]
    duals = np.zeros(m)
    if status == "optimal":
        ineq = res.ineqlin.marginals if A_ub.size else np.zeros(0)
        nle = int(le.sum())
        duals[le] = ineq[:nle]
        duals[ge] = -ineq[nle:]
        if eq.any():
            duals[eq] = res.eqlin.marginals
        x = np.asarray(res.x, dtype=float)
        return LPResult(status, x, duals, float(lp.c @ x), info={"message": res.message})
    return LPResult(status, np.full(lp.c.size, np.nan), duals, np.nan, info={"message": res.message})


# -- two-phase Bland simplex ----------------------------------------------------------

def _standard_form(lp: LinearProgram):
    """Rewrite as ``min c's, A's = b', s >= 0`` and remember how to map back."""
    n = lp.c.size
    cols = []  # per original variable: list of (std column, sign)
    offset = np.zeros(n)
    std_cols: list[np.ndarray] = []
    std_cost: list[float] = []
    extra_rows: list[tuple[int, float]] = []  # (std column, upper bound)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        a, cj = lp.A[:, j], lp.c[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append([(len(std_cols), 1.0)])
            if np.isfinite(hi):
                extra_rows.append((len(std_cols), hi - lo))
            std_cols.append(a)
            std_cost.append(cj)
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append([(len(std_cols), -1.0)])
            std_cols.append(-a)
            std_cost.append(-cj)
        else:
            cols.append([(len(std_cols), 1.0), (len(std_cols) + 1, -1.0)])
            std_cols += [a, -a]
            std_cost += [cj, -cj]
    m = lp.A.shape[0]
    b = lp.b - lp.A @ offset
    nstd = len(std_cols)
    A = np.column_stack(std_cols) if nstd else np.zeros((m, 0))
    # bound rows
    if extra_rows:
        B = np.zeros((len(extra_rows), nstd))
        for r, (col, _) in enumerate(extra_rows):
            B[r, col] = 1.0
        A = np.vstack([A, B])
        b = np.concatenate([b, [u for _, u in extra_rows]])
    senses = list(lp.senses) + ["<="] * len(extra_rows)
    # slacks
    slack_cols = []
    for i, s in enumerate(senses):
        if s == "=":
            continue
        col = np.zeros(A.shape[0])
        col[i] = 1.0 if s == "<=" else -1.0
        slack_cols.append(col)
    if slack_cols:
        A = np.hstack([A, np.column_stack(slack_cols)])
    cost = np.concatenate([std_cost, np.zeros(len(slack_cols))])
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    return A, b, cost, sign, cols, offset, nstd


def _pivot(T: np.ndarray, r: int, k: int) -> None:
    T[r] /= T[r, k]
    col = T[:, k].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T: np.ndarray, basis: list[int], allowed: int, pivots: int) -> tuple[str, int]:
    """Bland-rule iterations on tableau ``T`` (objective row last)."""
    m = T.shape[0] - 1
    scale = max(1.0, float(np.max(np.abs(T[-1, :allowed]))) if allowed else 1.0)
    while True:
        red = T[-1, :allowed]
        cand = np.nonzero(red < -PIVOT_TOL * scale)[0]
        if cand.size == 0:
            return "optimal", pivots
        k = int(cand[0])
        col = T[:m, k]
        pos = col > PIVOT_TOL
        if not np.any(pos):
            return "unbounded", pivots
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))[0]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, k)
        basis[r] = k
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise CycleGuardExceeded(f"simplex exceeded {MAX_PIVOTS} pivots")


def _simplex(lp: LinearProgram) -> LPResult:
    A, b, cost, sign, cols, offset, nstd = _standard_form(lp)
    m, nv = A.shape
    n_orig = lp.c.size
    if m == 0:
        if np.any(cost < 0):
            return LPResult("unbounded", np.full(n_orig, np.nan), np.zeros(0), -np.inf)
        x = offset.copy()
        return LPResult("optimal", x, np.zeros(0), float(lp.c @ x))
    # phase 1 tableau with one artificial per row
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv : nv + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nv] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nv, nv + m))
    status, pivots = _run(T, basis, nv, 0)
    bscale = max(1.0, float(np.max(np.abs(b))))
    if -T[-1, -1] > 1e-9 * bscale:
        return LPResult("infeasible", np.full(n_orig, np.nan), np.zeros(lp.A.shape[0]), np.nan, pivots)
    # drive artificials out; rows with no usable pivot are redundant
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= nv:
            row = T[r, :nv]
            nz = np.nonzero(np.abs(row) > 1e-9)[0]
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                pivots += 1
            else:
                keep[r] = False
    rows = np.nonzero(keep)[0]
    T2 = np.zeros((rows.size + 1, nv + 1))
    T2[:-1, :nv] = T[rows, :nv]
    T2[:-1, -1] = T[rows, -1]
    basis2 = [basis[r] for r in rows]
    T2[-1, :nv] = cost
    for i, j in enumerate(basis2):
        T2[-1] -= cost[j] * T2[i]
    status, pivots = _run(T2, basis2, nv, pivots)
    if status == "unbounded":
        return LPResult("unbounded", np.full(n_orig, np.nan), np.zeros(lp.A.shape[0]), -np.inf, pivots)
    # recompute the basic solution and duals from the original data
    B = A[np.ix_(rows, basis2)]
    try:
        xb = np.linalg.solve(B, b[rows])
        y_rows = np.linalg.solve(B.T, cost[basis2])
    except np.linalg.LinAlgError:
        xb = T2[:-1, -1]
        y_rows = np.linalg.lstsq(B.T, cost[basis2], rcond=None)[0]
    s = np.zeros(nv)
    s[basis2] = np.maximum(xb, 0.0)
    y = np.zeros(m)
    y[rows] = y_rows
    y = y * sign
    x = offset.copy()
    for j, parts in enumerate(cols):
        for col, sg in parts:
            x[j] += sg * s[col]
    duals = y[: lp.A.shape[0]]
    return LPResult("optimal", x, duals, float(lp.c @ x), pivots)


def residuals(lp: LinearProgram, res: LPResult) -> dict[str, float]:
    """Primal feasibility, dual feasibility and complementary slackness."""
    x, y = res.x, res.duals
    ax = lp.A @ x
    senses = np.array(lp.senses)
    viol = np.zeros(lp.b.size)
    viol[senses == "<="] = np.maximum(ax - lp.b, 0)[senses == "<="]
    viol[senses == ">="] = np.maximum(lp.b - ax, 0)[senses == ">="]
    viol[senses == "="] = np.abs(ax - lp.b)[senses == "="]
    bound = np.maximum(lp.lb - x, 0).max(initial=0) + np.maximum(x - lp.ub, 0).max(initial=0)
    # sign of the row duals
    dual_sign = np.zeros(lp.b.size)
    dual_sign[senses == "<="] = np.maximum(y, 0)[senses == "<="]
    dual_sign[senses == ">="] = np.maximum(-y, 0)[senses == ">="]
    red = lp.c - lp.A.T @ y
    at_lo = np.isclose(x, lp.lb, atol=1e-9)
    at_hi = np.isclose(x, lp.ub, atol=1e-9)
    red_bad = np.where(at_lo & ~at_hi, np.maximum(-red, 0), np.where(at_hi & ~at_lo, np.maximum(red, 0), np.where(at_lo & at_hi, 0, np.abs(red))))
    slack = np.abs(ax - lp.b)
    comp = np.abs(y) * slack
    return {
        "primal": float(max(viol.max(initial=0), bound)),
        "dual": float(max(dual_sign.max(initial=0), red_bad.max(initial=0))),
        "complementarity": float(comp.max(initial=0)),
    }
