"""Local mass-change penalties and the built-in catalog.

A ``LocalDiscrepancy`` is determined by its static profile ``h_s``: the dual
constraint set is ``{(alpha, beta): beta <= h_s(-alpha)}`` and the cost is
the support function ``c_s(m0, m1) = sup_z m1*h_s(z) - m0*z``.  Catalog
entries store the cost in closed form as well; the invariants tested in the
suite check that both agree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidParameters, NegativeMass, UnknownName
from .hfunc import INF, NEG_INF, HFunction, check_static_profile, mirror

LN2 = math.log(2.0)

CATALOG_NAMES = (
    "exact",
    "tv",
    "pwl",
    "hellinger",
    "jensen_shannon",
    "chi2",
    "kl0",
    "kl1",
    "power",
    "custom_pwl",
)

_ALIASES = {"js": "jensen_shannon", "chi_squared": "chi2", "sim_d": "exact"}


# -- conjugacy helpers -------------------------------------------------------

def tangent_z(h: HFunction, gamma: float, which: str = "lo") -> float:
    """Maximiser of ``z -> gamma*h(z) - z`` (smallest one, or largest if ``which='hi'``).

    Returns ``-inf``/``inf`` when the supremum is approached at infinity.
    """
    if gamma < 0:
        raise NegativeMass("ratio must be nonnegative")
    if gamma == 0:
        return h.domain_lo
    if h.pwl is not None:
        pl = h.pwl
        right = pl.dright(pl.x)
        left = pl.dleft(pl.x)
        if which == "lo":
            if pl.slope_left is not None and gamma * pl.slope_left < 1:
                return NEG_INF
            ok = np.nonzero(gamma * right <= 1.0)[0]
            return float(pl.x[ok[0]]) if ok.size else INF
        if pl.slope_right is not None and gamma * pl.slope_right > 1:
            return INF
        ok = np.nonzero(gamma * left >= 1.0)[0]
        return float(pl.x[ok[-1]]) if ok.size else NEG_INF

    def settled(z: float) -> bool:
        d = float(h.deriv_right(z)) if which == "lo" else float(h.deriv_left(z))
        return gamma * d <= 1.0 if which == "lo" else gamma * d < 1.0

    if math.isfinite(h.domain_lo):
        lo = h._near_lo()
        if settled(lo):
            return float(lo)
    else:
        lo = -1.0
        while settled(lo):
            lo = 2 * lo - 1
            if lo < -1e15:
                return NEG_INF
    hi = 1.0
    if math.isfinite(h.argsup):
        hi = h.argsup
    elif math.isfinite(h.domain_hi):
        hi = h._near_hi()
    else:
        while not settled(hi):
            hi = 2 * hi + 1
            if hi > 1e15:
                return INF
    if not settled(hi):
        return INF
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if settled(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 2e-16 * max(1.0, abs(hi)):
            break
    return float(hi)


def conjugate_value(h: HFunction, gamma: float) -> float:
    """``sup_z gamma*h(z) - z`` (the cost of changing unit mass to ``gamma``)."""
    if gamma == 0:
        return -h.domain_lo
    if gamma == 1:
        return 0.0
    if h.pwl is not None:
        pl = h.pwl
        if pl.slope_right is not None and gamma * pl.slope_right > 1:
            return INF
        if pl.slope_left is not None and gamma * pl.slope_left < 1:
            return INF
        return float(np.max(gamma * pl.y - pl.x))
    z = tangent_z(h, gamma)
    if not math.isfinite(z):
        return INF
    return gamma * float(h(z)) - z


SEED_RATIOS = 33
SPAN_DECADES = 2
FINE_PER_SEED = 64


# -- the discrepancy type ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LocalDiscrepancy:
    name: str
    h_s: HFunction
    h_bar_s: HFunction
    cost: Callable[[float, float], float] | None = None
    dcost: Callable[[float], tuple[float, float]] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    symmetric: bool = False

    def c_s(self, m0: float, m1: float) -> float:
        return cs_eval(self, m0, m1)

    def derivative2(self, gamma: float) -> tuple[float, float]:
        """Left/right derivative of ``gamma -> c_s(1, gamma)``."""
        if self.dcost is not None:
            return self.dcost(gamma)
        z_lo = tangent_z(self.h_s, gamma, "lo")
        z_hi = tangent_z(self.h_s, gamma, "hi")
        return float(self.h_s(z_hi)) if math.isfinite(z_hi) else self.h_s.sup_value, (
            float(self.h_s(z_lo)) if math.isfinite(z_lo) else self.h_s.inf_value
        )

    @property
    def partial1_limits(self) -> tuple[float, float]:
        """Limits of the first partial of ``c_s(a, 1)`` as a -> 0 and a -> inf."""
        return -self.h_s.argsup, -self.h_s.domain_lo

    @property
    def partial2_limits(self) -> tuple[float, float]:
        """Limits of the second partial of ``c_s(1, a)`` as a -> 0 and a -> inf."""
        return self.h_s.inf_value, self.h_s.sup_value

    def __repr__(self) -> str:
        return f"LocalDiscrepancy({self.name!r})"


def cs_eval(disc: LocalDiscrepancy, m0: float, m1: float) -> float:
    """Mass-change cost ``c_S(m0, m1)``; ``inf`` for forbidden changes."""
    m0 = float(m0)
    m1 = float(m1)
    if m0 < 0 or m1 < 0 or math.isnan(m0) or math.isnan(m1):
        raise NegativeMass(f"masses must be nonnegative, got ({m0}, {m1})")
    if m0 == 0 and m1 == 0:
        return 0.0
    h = disc.h_s
    if m0 == 0:
        return m1 * h.sup_value
    if m1 == 0:
        return INF if not math.isfinite(h.domain_lo) else -m0 * h.domain_lo
    if disc.cost is not None:
        return float(disc.cost(m0, m1))
    return m0 * conjugate_value(h, m1 / m0)


def supporting_points(disc: LocalDiscrepancy, k: int) -> list[tuple[float, float]]:
    """``k`` points on the boundary ``beta = h_s(-alpha)``, ordered by alpha.

    The span runs between the tangency points of mass ratios 1e-3 and 1e3.
    The origin and kinks are always kept; the rest are placed so every gap
    carries the same share of the integrated sqrt chord gap, which
    equidistributes the per-unit-mass cost error of the tangent envelope.
    """
    if k < 3:
        raise InvalidParameters("need at least 3 supporting points")
    h = disc.h_s
    seeds = {0.0}
    for g in np.logspace(-SPAN_DECADES, SPAN_DECADES, SEED_RATIOS):
        z = tangent_z(h, float(g))
        if math.isfinite(z) and math.isfinite(float(h(z))):
            seeds.add(0.0 if abs(z) < 1e-12 else float(z))
    lo_w, hi_w = h.window(default=50.0)
    if len(seeds) < 3:
        seeds.update(float(z) for z in np.linspace(lo_w, hi_w, SEED_RATIOS))
    seeds = sorted(seeds)
    fixed = {seeds[0], 0.0, seeds[-1]}
    fixed.update(float(z) for z in h.kinks if seeds[0] <= z <= seeds[-1] and math.isfinite(float(h(z))))
    fine = np.unique(np.concatenate([np.linspace(a, b, FINE_PER_SEED + 1) for a, b in zip(seeds[:-1], seeds[1:])]))
    hz = np.asarray(h(fine), dtype=float)
    mid = 0.5 * (fine[:-1] + fine[1:])
    slope = np.diff(hz) / np.diff(fine)
    with np.errstate(invalid="ignore"):
        gap = (np.asarray(h(mid), dtype=float) - 0.5 * (hz[:-1] + hz[1:])) / (1.0 + np.abs(slope))
    weight = np.sqrt(np.clip(np.nan_to_num(gap, nan=0.0, posinf=0.0), 0.0, None))
    cum = np.concatenate([[0.0], np.cumsum(weight)])
    pts = sorted(fixed)
    free = k - len(pts)
    if free > 0 and cum[-1] > 0:
        targets = cum[-1] * np.arange(1, free + 1) / (free + 1)
        placed = np.interp(targets, cum, fine)
        pts = sorted(set(pts) | set(float(z) for z in placed))
    while len(pts) < k:
        gaps = np.diff(pts)
        i = int(np.argmax(gaps))
        pts.insert(i + 1, 0.5 * (pts[i] + pts[i + 1]))
    if len(pts) > k:
        keep = set(np.round(np.linspace(0, len(pts) - 1, k)).astype(int).tolist())
        keep.add(pts.index(0.0))
        pts = [p for i, p in enumerate(pts) if i in keep]
        while len(pts) > k:
            # drop a non-fixed point from the densest spot
            gaps = np.diff(pts)
            order = np.argsort(gaps[:-1] + gaps[1:])
            for i in order:
                if pts[i + 1] not in fixed:
                    del pts[i + 1]
                    break
            else:
                break
    out = [(-z, float(h(z))) for z in reversed(pts)]
    return [(a + 0.0, b) for a, b in out]


# -- catalog ---------------------------------------------------------------------

def _closed(func, d, lo, lo_closed, tag, meta, dright=None, hi=INF, hi_closed=False) -> HFunction:
    return HFunction(
        func=func,
        domain_lo=lo,
        domain_hi=hi,
        lo_closed=lo_closed,
        hi_closed=hi_closed,
        kind="closed_form",
        tag=tag,
        dleft=d,
        dright=dright or d,
        meta=meta,
    )


def _smooth_dcost(f: Callable[[float], float]) -> Callable[[float], tuple[float, float]]:
    def d(g: float) -> tuple[float, float]:
        v = f(g)
        return v, v

    return d


def _hellinger() -> LocalDiscrepancy:
    meta = {"sup": 1.0, "argsup": INF, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}
    h = _closed(lambda z: z / (1 + z), lambda z: 1 / (1 + z) ** 2, -1.0, False, "hellinger", meta)

    def cost(m0, m1):
        return (math.sqrt(m1) - math.sqrt(m0)) ** 2

    return LocalDiscrepancy(
        "hellinger", h, h, cost, _smooth_dcost(lambda g: 1 - 1 / math.sqrt(g) if g > 0 else NEG_INF), symmetric=True
    )


def _jensen_shannon() -> LocalDiscrepancy:
    meta = {"sup": 1.0, "argsup": INF, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}

    def f(z):
        # log1p/expm1 keep full precision near the fixed point 0
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log1p(-np.expm1(-z * LN2)) / LN2

    h = _closed(f, lambda z: 1.0 / (np.exp2(z + 1.0) - 1.0), -1.0, False, "jensen_shannon", meta)

    def cost(m0, m1):
        s = m0 + m1
        return m0 * math.log2(2 * m0 / s) + m1 * math.log2(2 * m1 / s)

    return LocalDiscrepancy(
        "jensen_shannon",
        h,
        h,
        cost,
        _smooth_dcost(lambda g: math.log2(2 * g / (1 + g)) if g > 0 else NEG_INF),
        symmetric=True,
    )


def _chi2() -> LocalDiscrepancy:
    meta = {"sup": 1.0, "argsup": 3.0, "inf": -3.0, "fixed_hi": 0.0, "fixed_lo": 0.0}

    def f(z):
        r = np.sqrt(1.0 + np.minimum(z, 3.0))
        return np.where(z > 3.0, 1.0, 1.0 - (2.0 - r) ** 2)

    def d(z, right=False):
        r = np.sqrt(1.0 + np.minimum(z, 3.0))
        with np.errstate(divide="ignore"):
            inner = (2.0 - r) / r
        cut = z >= 3.0 if right else z > 3.0
        return np.where(cut, 0.0, inner)

    h = _closed(f, d, -1.0, True, "chi2", meta, dright=lambda z: d(z, True))

    def cost(m0, m1):
        return (m1 - m0) ** 2 / (m1 + m0)

    return LocalDiscrepancy(
        "chi2", h, h, cost, _smooth_dcost(lambda g: (g - 1) * (g + 3) / (g + 1) ** 2), symmetric=True
    )


def _exact() -> LocalDiscrepancy:
    meta = {
        "sup": INF,
        "argsup": INF,
        "inf": NEG_INF,
        "fixed_hi": INF,
        "fixed_lo": NEG_INF,
    }
    h = _closed(lambda z: np.array(z, dtype=float), lambda z: np.ones_like(z), NEG_INF, False, "exact", meta)

    def cost(m0, m1):
        return 0.0 if m0 == m1 else INF

    def dcost(g):
        return (NEG_INF, INF) if g == 1 else (NEG_INF, NEG_INF) if g < 1 else (INF, INF)

    return LocalDiscrepancy("exact", h, h, cost, dcost, symmetric=True)


def _pwl_cost(dl, sl, a, su, du, b):
    def cost(m0, m1):
        r = m1 / m0
        if r <= 1 / a:
            return m1 * (sl + a * (dl - sl)) - dl * m0
        if r <= 1:
            return (m1 - m0) * sl
        if r <= 1 / b:
            return (m1 - m0) * su
        return m1 * (su + b * (du - su)) - du * m0

    return cost


def pwl(dl: float, sl: float, a: float, su: float, du: float, b: float) -> LocalDiscrepancy:
    """Piecewise-linear profile: slope ``a`` on [dl, sl], 1 on [sl, su], ``b`` on [su, du], flat after."""
    vals = [dl, sl, a, su, du, b]
    if not all(math.isfinite(v) for v in vals):
        raise InvalidParameters("pwl parameters must be finite")
    if not (dl <= sl <= 0 <= su <= du):
        raise InvalidParameters("pwl needs dl <= sl <= 0 <= su <= du")
    if not (0 < b <= 1 <= a):
        raise InvalidParameters("pwl needs 0 < b <= 1 <= a")
    xs = [dl, sl, su, du]
    ys = [sl + a * (dl - sl), sl, su, su + b * (du - su)]
    bx, by = [xs[0]], [ys[0]]
    for x, y in zip(xs[1:], ys[1:]):
        if x > bx[-1]:
            bx.append(x)
            by.append(y)
    if len(bx) < 2:
        raise InvalidParameters("pwl profile collapses to a point")
    h = HFunction.piecewise_linear(bx, by, slope_right=0.0, extend_left=False, tag="pwl")
    problems = check_static_profile(h)
    if problems:
        raise InvalidParameters("pwl parameters give an inadmissible profile: " + "; ".join(problems))

    def dcost(g):
        levels = [ys[0], sl, su, ys[3]]
        cuts = [1 / a, 1.0, 1 / b]
        idx_l = sum(g > c for c in cuts)
        idx_r = sum(g >= c for c in cuts)
        return levels[idx_l], levels[idx_r]

    sym = math.isclose(dl, -du) and math.isclose(sl, -su) and math.isclose(a, 1 / b)
    return LocalDiscrepancy(
        "pwl",
        h,
        mirror(h),
        _pwl_cost(dl, sl, a, su, du, b),
        dcost,
        params={"dl": dl, "sl": sl, "a": a, "su": su, "du": du, "b": b},
        symmetric=sym,
    )


def tv() -> LocalDiscrepancy:
    h = HFunction.piecewise_linear([-1.0, 1.0], [-1.0, 1.0], slope_right=0.0, extend_left=False, tag="tv")

    def dcost(g):
        if g < 1:
            return -1.0, -1.0
        if g > 1:
            return 1.0, 1.0
        return -1.0, 1.0

    return LocalDiscrepancy("tv", h, h, lambda m0, m1: abs(m1 - m0), dcost, symmetric=True)


def _kl_profiles() -> tuple[HFunction, HFunction]:
    log_meta = {"sup": INF, "argsup": INF, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}
    exp_meta = {"sup": 1.0, "argsup": INF, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}
    h_log = _closed(np.log1p, lambda z: 1 / (1 + z), -1.0, False, "log1p", log_meta)
    h_exp = _closed(lambda z: -np.expm1(-z), lambda z: np.exp(-z), NEG_INF, False, "one_minus_exp", exp_meta)
    return h_log, h_exp


def _kl0() -> LocalDiscrepancy:
    h_log, h_exp = _kl_profiles()

    def cost(m0, m1):
        return m1 * math.log(m1 / m0) - m1 + m0

    return LocalDiscrepancy("kl0", h_log, h_exp, cost, _smooth_dcost(lambda g: math.log(g) if g > 0 else NEG_INF))


def _kl1() -> LocalDiscrepancy:
    h_log, h_exp = _kl_profiles()

    def cost(m0, m1):
        return m1 - m0 - m0 * math.log(m1 / m0)

    return LocalDiscrepancy("kl1", h_exp, h_log, cost, _smooth_dcost(lambda g: 1 - 1 / g if g > 0 else NEG_INF))


def power(p: float) -> LocalDiscrepancy:
    """Power-divergence family with the profile ``(1 - (1+(1-p)z)^(p/(p-1)))/p``.

    Only ``p < 1``, ``p != 0`` yields an admissible (nondecreasing) profile;
    other exponents are rejected.
    """
    p = float(p)
    if not math.isfinite(p) or p == 0 or p >= 1:
        raise InvalidParameters(
            "power(p) needs p < 1 and p != 0: for p > 1 the profile is -inf above a finite point, "
            "so it is not nondecreasing; use kl0/kl1 for the limits p -> 0, 1"
        )
    e = p / (p - 1)
    lo = -1.0 / (1.0 - p)

    def f(z):
        base = np.maximum(1.0 + (1.0 - p) * z, 0.0)
        with np.errstate(divide="ignore"):
            return (1.0 - base**e) / p

    def d(z):
        base = np.maximum(1.0 + (1.0 - p) * z, 0.0)
        with np.errstate(divide="ignore"):
            return base ** (1.0 / (p - 1.0))

    if p > 0:
        meta = {"sup": 1.0 / p, "argsup": INF, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}
    else:
        meta = {"sup": INF, "argsup": INF, "inf": 1.0 / p, "fixed_hi": 0.0, "fixed_lo": 0.0}
    h = _closed(f, d, lo, p < 0, f"power({p:g})", meta)

    top = INF if p > 0 else -1.0 / p

    def fb(w):
        wc = np.minimum(w, top)
        base = np.maximum(1.0 + p * wc, 0.0)
        with np.errstate(divide="ignore"):
            return (base ** ((p - 1.0) / p) - 1.0) / (p - 1.0)

    def db(w, right=False):
        wc = np.minimum(w, top)
        base = np.maximum(1.0 + p * wc, 0.0)
        with np.errstate(divide="ignore"):
            val = base ** (-1.0 / p)
        cut = w >= top if right else w > top
        return np.where(cut, 0.0, val)

    if p > 0:
        bmeta = {"sup": 1.0 / (1.0 - p), "argsup": INF, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}
        hb = _closed(fb, db, -1.0 / p, False, f"power_mirror({p:g})", bmeta)
    else:
        bmeta = {"sup": 1.0 / (1.0 - p), "argsup": top, "inf": NEG_INF, "fixed_hi": 0.0, "fixed_lo": 0.0}
        hb = _closed(fb, db, NEG_INF, False, f"power_mirror({p:g})", bmeta, dright=lambda w: db(w, True))

    def cost(m0, m1):
        r = m0 / m1
        return m1 / (p * (p - 1)) * (r**p - p * (r - 1) - 1)

    return LocalDiscrepancy(
        "power",
        h,
        hb,
        cost,
        _smooth_dcost(lambda g: (1 - g ** (-p)) / p if g > 0 else (NEG_INF if p > 0 else 1 / p)),
        params={"p": p},
    )


def custom_pwl(breakpoints, values, *, closed_left: bool = False, name: str = "custom_pwl") -> LocalDiscrepancy:
    """User profile given by breakpoints; linear extension on both sides unless ``closed_left``."""
    try:
        h = HFunction.piecewise_linear(breakpoints, values, extend_left=not closed_left, tag=name)
    except (ValueError, IndexError) as exc:
        raise InvalidParameters(str(exc)) from exc
    problems = check_static_profile(h)
    if problems:
        raise InvalidParameters("custom profile is inadmissible: " + "; ".join(problems))
    hb = mirror(h)
    sym = False
    z = np.linspace(-5, 5, 101)
    with np.errstate(invalid="ignore"):
        sym = bool(np.allclose(h(z), hb(z), rtol=0, atol=1e-12, equal_nan=True))
    return LocalDiscrepancy(name, h, hb, None, None, params={}, symmetric=sym)


def no_dynamic_example() -> LocalDiscrepancy:
    """``min(z, z/2 + 1/2, z/4 + 1)``: a valid static model without a dynamic one."""
    return custom_pwl([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 1.5, 1.75], name="nd")


_CALL = re.compile(r"^\s*([a-z_0-9]+)\s*(?:\((.*)\))?\s*$")


def catalog(name: str, *args: float, **kwargs) -> LocalDiscrepancy:
    """Look up a catalog entry; parameters may be inline, e.g. ``"pwl(-2,-1,2,1,2,0.5)"``."""
    m = _CALL.match(name.lower())
    if not m:
        raise UnknownName(f"unknown discrepancy {name!r}")
    key = _ALIASES.get(m.group(1), m.group(1))
    if m.group(2):
        try:
            args = tuple(float(s) for s in m.group(2).split(",") if s.strip()) + tuple(args)
        except ValueError as exc:
            raise InvalidParameters(f"cannot parse parameters of {name!r}") from exc
    if key == "hellinger":
        return _hellinger()
    if key == "jensen_shannon":
        return _jensen_shannon()
    if key == "chi2":
        return _chi2()
    if key == "tv":
        return tv()
    if key == "exact":
        return _exact()
    if key == "kl0":
        return _kl0()
    if key == "kl1":
        return _kl1()
    if key == "pwl":
        if len(args) + len(kwargs) != 6:
            raise InvalidParameters("pwl takes (dl, sl, a, su, du, b)")
        return pwl(*args, **kwargs)
    if key == "power":
        if len(args) + len(kwargs) != 1:
            raise InvalidParameters("power takes one exponent p")
        return power(*args, **kwargs)
    if key == "custom_pwl":
        return custom_pwl(*args, **kwargs)
    raise UnknownName(f"unknown discrepancy {name!r}; known: {', '.join(CATALOG_NAMES)}")
