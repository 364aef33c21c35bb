"""Reference computations that do not call into the package under test.

Closed forms are typed in from the catalog table; brute-force oracles use
enumeration or dense grids so they share no code path with the solvers.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize_scalar

LN2 = math.log(2.0)


# -- closed forms -----------------------------------------------------------------

def cs_closed(name: str, m0: float, m1: float) -> float:
    if m0 == m1:
        return 0.0
    if name == "hellinger":
        return (math.sqrt(m1) - math.sqrt(m0)) ** 2
    if name == "tv":
        return abs(m1 - m0)
    if name == "chi2":
        return (m1 - m0) ** 2 / (m1 + m0)
    if name == "jensen_shannon":
        tot = m0 + m1
        out = 0.0
        for m in (m0, m1):
            if m > 0:
                out += m * math.log2(2 * m / tot)
        return out
    if name == "kl0":
        if m1 == 0:
            return math.inf
        if m0 == 0:
            return m1
        return m1 - m0 - m0 * math.log(m1 / m0)
    if name == "kl1":
        if m0 == 0:
            return math.inf
        if m1 == 0:
            return m0
        return m1 * math.log(m1 / m0) - m1 + m0
    if name == "exact":
        return math.inf
    raise KeyError(name)


def cs_closed_array(name: str, m0, m1):
    """Vectorized closed forms for the symmetric rows, with the 0 log 0 = 0 convention."""
    m0 = np.asarray(m0, dtype=float)
    m1 = np.asarray(m1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if name == "hellinger":
            return (np.sqrt(m1) - np.sqrt(m0)) ** 2
        if name == "tv":
            return np.abs(m1 - m0)
        if name == "chi2":
            tot = m0 + m1
            return np.where(tot > 0, (m1 - m0) ** 2 / np.where(tot > 0, tot, 1.0), 0.0)
        if name == "jensen_shannon":
            tot = m0 + m1
            out = np.zeros(np.broadcast(m0, m1).shape)
            for m in (m0, m1):
                out = out + np.where(m > 0, m * np.log2(np.where(m > 0, 2 * m / np.where(tot > 0, tot, 1.0), 1.0)), 0.0)
            return out
    raise KeyError(name)


def power_cs(p: float, m0: float, m1: float) -> float:
    r = m1 / m0
    return m0 / (p * (p - 1)) * (r**p - p * (r - 1) - 1)


def hs_closed(name: str, z: float) -> float:
    if name == "hellinger":
        return z / (1 + z) if z > -1 else -math.inf
    if name == "jensen_shannon":
        return math.log2(2 - 2.0 ** (-z)) if z > -1 else -math.inf
    if name == "tv":
        return min(z, 1.0) if z >= -1 else -math.inf
    if name == "chi2":
        if z > 3:
            return 1.0
        if z >= -1:
            return 1 - (2 - math.sqrt(1 + z)) ** 2
        return -math.inf
    if name == "kl0":
        return math.log1p(z) if z > -1 else -math.inf
    if name == "kl1":
        return 1 - math.exp(-z)
    if name == "exact":
        return z
    raise KeyError(name)


def pwl_hs(params, z: float) -> float:
    dl, sl, a, su, du, b = params
    if z < dl:
        return -math.inf
    if z < sl:
        return sl + a * (z - sl)
    if z < su:
        return z
    if z < du:
        return su + b * (z - su)
    return su + b * (du - su)


def pwl_hd(params, z: float) -> float:
    """Growth profile of the pwl row: ``(z - s) log(slope)`` outside the flat part."""
    dl, sl, a, su, du, b = params
    lo = sl + a * (dl - sl)
    if z < lo or z > du:
        return -math.inf
    if z <= sl:
        return (z - sl) * math.log(a)
    if z <= su:
        return 0.0
    return (z - su) * math.log(b)


def hellinger_flow(t: float, z: float) -> float:
    # solution of phi' = -phi^2
    den = 1 + t * z
    return z / den if den > 0 else -math.inf


def js_growth(z: float) -> float:
    return -((2 ** (z / 2) - 2 ** (-z / 2)) ** 2) / LN2


def hellinger_S(L: float) -> float:
    return (L / 2 + math.sqrt(L * L / 4 + 1)) ** 2


# -- brute force -------------------------------------------------------------------

def conjugate_oracle(h, m0: float, m1: float, lo: float = -60.0, hi: float = 60.0, n: int = 200_001) -> float:
    """``sup_z m1 h(z) - m0 z`` by a dense grid and a bounded refinement.

    ``h`` must accept arrays.
    """
    z = np.linspace(lo, hi, n)
    with np.errstate(invalid="ignore", over="ignore"):
        vals = m1 * np.asarray(h(z), dtype=float) - m0 * z
    vals = np.where(np.isnan(vals), -np.inf, vals)
    k = int(np.argmax(vals))
    left, right = z[max(k - 1, 0)], z[min(k + 1, n - 1)]
    res = minimize_scalar(lambda v: -(m1 * float(h(v)) - m0 * v), bounds=(left, right), method="bounded",
                          options={"xatol": 1e-13})
    return max(float(vals[k]), -float(res.fun))


def lp_vertex_enumeration(c, A_eq, b_eq) -> float:
    """Min ``c x`` over ``A x = b, x >= 0`` by trying every basis."""
    c = np.asarray(c, float)
    A = np.asarray(A_eq, float)
    b = np.asarray(b_eq, float)
    # drop dependent rows
    keep = []
    for i in range(A.shape[0]):
        trial = keep + [i]
        if np.linalg.matrix_rank(A[trial]) == len(trial):
            keep.append(i)
    A, b = A[keep], b[keep]
    m, n = A.shape
    best = math.inf
    for cols in itertools.combinations(range(n), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.all(xb >= -1e-12):
            best = min(best, float(c[list(cols)] @ xb))
    return best


def w1_by_vertices(w0, w1, dist) -> float:
    n = len(w0)
    A = []
    for i in range(n):
        row = np.zeros((n, n))
        row[i, :] = 1
        A.append(row.ravel())
    for j in range(n):
        col = np.zeros((n, n))
        col[:, j] = 1
        A.append(col.ravel())
    return lp_vertex_enumeration(np.asarray(dist).ravel(), A, np.concatenate([w0, w1]))


def two_dirac_cost(cs, L, m00, m0L, m10, m1L, a, b):
    """Mass ``a`` moves 0 -> L before the change, ``b`` after it.  ``cs`` takes arrays."""
    return L * (a + b) + cs(m00 - a, m10 + b) + cs(m0L + a, m1L - b)


def two_dirac_grid(cs, L, m00, m0L, m10, m1L, n: int = 200, zooms: int = 6) -> float:
    """Zoomed grid minimum over both transport directions."""

    def oriented(p00, p0L, p10, p1L):
        lo = np.array([0.0, 0.0])
        hi = np.array([p00, p1L])
        best = math.inf
        for _ in range(zooms):
            ga = np.linspace(lo[0], hi[0], n)
            gb = np.linspace(lo[1], hi[1], n)
            A, B = np.meshgrid(ga, gb, indexing="ij")
            vals = two_dirac_cost(cs, L, p00, p0L, p10, p1L, A, np.minimum(B, p1L))
            vals = np.where(np.isnan(vals), math.inf, vals)
            i, j = np.unravel_index(np.argmin(vals), vals.shape)
            best = min(best, float(vals[i, j]))
            span = (hi - lo) / (n - 1) * 4
            centre = np.array([ga[i], gb[j]])
            lo = np.maximum(centre - span, 0.0)
            hi = np.minimum(centre + span, [p00, p1L])
        return best

    # the reverse direction is the same problem with the two sites swapped
    return min(oriented(m00, m0L, m10, m1L), oriented(m0L, m00, m1L, m10))


def semicoupling_grid(cs, dx, m0, m1, n: int = 401) -> float:
    best = math.inf
    for a0 in np.linspace(0, m0, n):
        for a1 in np.linspace(0, m1, n):
            v = cs(a0, a1) + a0 * dx + cs(m0 - a0, m1 - a1) + (m1 - a1) * dx
            best = min(best, v)
    return best


def flat_norm_dual(w0, w1, dist) -> float:
    """``sup f.(w1 - w0)`` over ``|f| <= 1`` and ``f_i - f_j <= d_ij``: an LP in ``f``."""
    from scipy.optimize import linprog

    n = len(w0)
    rows, rhs = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                r = np.zeros(n)
                r[i], r[j] = 1, -1
                rows.append(r)
                rhs.append(dist[i][j])
    res = linprog(-(np.asarray(w1) - np.asarray(w0)), A_ub=np.array(rows) if rows else None,
                  b_ub=np.array(rhs) if rows else None, bounds=[(-1, 1)] * n, method="highs")
    return -float(res.fun)


def q_iteration(h, dh, z: float, iters: int = 4000) -> float:
    """Plain quotient iteration with a one-step Richardson at the end."""
    y_prev, y = z, h(z)
    deriv = dh(z)
    q_hist = [(y - y_prev) / deriv]
    for _ in range(iters):
        y_prev, y = y, h(y)
        deriv *= dh(y_prev)
        q_hist.append((y - y_prev) / deriv)
    j = len(q_hist)
    return 2 * q_hist[-1] - q_hist[j // 2 - 1]
