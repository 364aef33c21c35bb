"""Growth penalties and the flow of the scalar ODE ``phi' = h_D(phi)``.

Piecewise-linear profiles are integrated exactly segment by segment (on a
linear piece the solution is an exponential).  Smooth profiles invert the
travel time ``T(y) = int_y^z dx / -h_D(x)`` with adaptive quadrature on a
logarithmic coordinate around the nearest zero of ``h_D``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidParameters, NegativeDensity, UnknownName
from .hfunc import INF, NEG_INF, HFunction, check_dynamic_profile

LN2 = math.log(2.0)
# Log-coordinate panel width for travel-time accumulation.
PANEL = 0.5
# Distance to a fixed point below which a trajectory counts as absorbed.
SNAP = 1e-15


@dataclass(frozen=True)
class FlowResult:
    value: float
    reached_fixed_point: bool = False

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class DynamicPenalty:
    h_d: HFunction
    name: str = ""

    @cached_property
    def zeta_lo(self) -> float:
        return self.h_d.zero_lo

    @cached_property
    def zeta_hi(self) -> float:
        return self.h_d.zero_hi

    @property
    def d_lo(self) -> float:
        return self.h_d.domain_lo

    @property
    def d_hi(self) -> float:
        return self.h_d.domain_hi

    def problems(self) -> list[str]:
        return check_dynamic_profile(self.h_d)

    @cached_property
    def reflected(self) -> "DynamicPenalty":
        return DynamicPenalty(reflect(self.h_d), f"reflected({self.name})")

    def __repr__(self) -> str:
        return f"DynamicPenalty({self.name!r})"


def reflect(h: HFunction) -> HFunction:
    """``z -> h(-z)`` with the domain and one-sided derivatives mirrored."""
    if h.pwl is not None:
        pl = h.pwl
        sl = None if pl.slope_right is None else -pl.slope_right
        sr = None if pl.slope_left is None else -pl.slope_left
        return HFunction.piecewise_linear(
            -pl.x[::-1],
            pl.y[::-1],
            slope_left=sl,
            slope_right=sr,
            extend_left=sl is not None,
            extend_right=sr is not None,
            kind=h.kind,
            tag=f"reflect({h.tag})",
        )
    meta = {}
    for key, other in (("zero_lo", "zero_hi"), ("zero_hi", "zero_lo")):
        if other in h.meta:
            meta[key] = -h.meta[other]
    return HFunction(
        func=lambda z: h.func(-z),
        domain_lo=-h.domain_hi,
        domain_hi=-h.domain_lo,
        lo_closed=h.hi_closed,
        hi_closed=h.lo_closed,
        kind=h.kind,
        tag=f"reflect({h.tag})",
        dleft=None if h.dright is None else (lambda z: -h.dright(-z)),
        dright=None if h.dleft is None else (lambda z: -h.dleft(-z)),
        meta=meta,
    )


# -- catalog ---------------------------------------------------------------------

def _hellinger_hd() -> HFunction:
    return HFunction(
        func=lambda z: -z * z,
        kind="closed_form",
        tag="hellinger",
        dleft=lambda z: -2 * z,
        dright=lambda z: -2 * z,
        meta={"zero_lo": 0.0, "zero_hi": 0.0, "sup": 0.0, "inf": NEG_INF},
    )


def _js_hd() -> HFunction:
    # sinh form: the difference of powers cancels to zero for |z| < 1e-8
    def f(z):
        return -4.0 * np.sinh(0.5 * LN2 * np.asarray(z, dtype=float)) ** 2 / LN2

    def d(z):
        return -2.0 * np.sinh(LN2 * np.asarray(z, dtype=float))

    return HFunction(func=f, kind="closed_form", tag="jensen_shannon", dleft=d, dright=d,
                     meta={"zero_lo": 0.0, "zero_hi": 0.0, "sup": 0.0, "inf": NEG_INF})


def pwl_dynamic(dl: float, sl: float, a: float, su: float, du: float, b: float) -> DynamicPenalty:
    """Log-slope growth profile whose time-one flow is the matching static pwl profile."""
    if not (dl <= sl <= 0 <= su <= du) or not (0 < b <= 1 <= a):
        raise InvalidParameters("pwl needs dl <= sl <= 0 <= su <= du and 0 < b <= 1 <= a")
    lo = sl + a * (dl - sl)
    xs = [lo, sl, su, du]
    ys = [(lo - sl) * math.log(a), 0.0, 0.0, (du - su) * math.log(b)]
    bx, by = [xs[0]], [ys[0]]
    for x, y in zip(xs[1:], ys[1:]):
        if x > bx[-1]:
            bx.append(x)
            by.append(y)
    h = HFunction.piecewise_linear(bx, by, extend_left=False, extend_right=False, tag="pwl_dynamic")
    return DynamicPenalty(h, "pwl")


def dynamic_catalog(name: str, *args: float) -> DynamicPenalty:
    """Growth penalties with a closed-form profile."""
    from .discrepancy import _ALIASES, _CALL

    m = _CALL.match(name.lower())
    if not m:
        raise UnknownName(f"unknown dynamic model {name!r}")
    key = _ALIASES.get(m.group(1), m.group(1))
    if m.group(2):
        args = tuple(float(s) for s in m.group(2).split(",") if s.strip()) + tuple(args)
    if key == "hellinger":
        return DynamicPenalty(_hellinger_hd(), "hellinger")
    if key == "jensen_shannon":
        return DynamicPenalty(_js_hd(), "jensen_shannon")
    if key == "tv":
        h = HFunction.piecewise_linear([-1.0, 1.0], [0.0, 0.0], extend_left=False, extend_right=False, tag="tv_dynamic")
        return DynamicPenalty(h, "tv")
    if key == "exact":
        h = HFunction(func=lambda z: np.zeros_like(z), tag="exact_dynamic",
                      dleft=lambda z: np.zeros_like(z), dright=lambda z: np.zeros_like(z),
                      meta={"zero_lo": NEG_INF, "zero_hi": INF, "sup": 0.0, "inf": 0.0})
        return DynamicPenalty(h, "exact")
    if key == "pwl":
        if len(args) != 6:
            raise InvalidParameters("pwl takes (dl, sl, a, su, du, b)")
        return pwl_dynamic(*args)
    raise UnknownName(f"no closed-form growth profile for {name!r}; reconstruct it from the static model")


# -- conjugate -----------------------------------------------------------------------

def cd_eval(dp: DynamicPenalty, rho: float, zeta: float) -> float:
    """``c_D(rho, zeta) = sup_z rho*h_D(z) + zeta*z``."""
    rho = float(rho)
    zeta = float(zeta)
    if rho < 0 or math.isnan(rho):
        raise NegativeDensity(f"density must be nonnegative, got {rho}")
    h = dp.h_d
    if zeta == 0:
        return 0.0
    if rho == 0:
        end = h.domain_hi if zeta > 0 else h.domain_lo
        return INF if math.isinf(end) else zeta * end
    if h.tag == "hellinger":
        return zeta * zeta / (4 * rho)
    if h.tag == "jensen_shannon":
        v = zeta / rho
        g = v / 2 + math.sqrt(v * v / 4 + 1)
        z = math.log2(g)
        return rho * float(h(z)) + zeta * z
    if h.pwl is not None:
        pl = h.pwl
        if pl.slope_right is not None and rho * pl.slope_right + zeta > 0:
            return INF
        if pl.slope_left is not None and rho * pl.slope_left + zeta < 0:
            return INF
        return float(np.max(rho * pl.y + zeta * pl.x))
    return _golden_conjugate(h, rho, zeta)


def _golden_conjugate(h: HFunction, rho: float, zeta: float) -> float:
    def neg(z):
        v = float(h(z))
        return INF if not math.isfinite(v) else -(rho * v + zeta * z)

    lo, hi = h.window(default=1.0)
    # widen until the maximiser is inside
    for _ in range(200):
        grew = False
        if math.isinf(h.domain_hi) and rho * float(h.deriv_left(hi)) + zeta > 0:
            hi = 2 * hi + 1
            grew = True
        if math.isinf(h.domain_lo) and rho * float(h.deriv_right(lo)) + zeta < 0:
            lo = 2 * lo - 1
            grew = True
        if not grew:
            break
    else:
        return INF
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13 * max(1.0, hi - lo)})
    best = max(-res.fun, -neg(lo), -neg(hi))
    return float(best)


# -- flow --------------------------------------------------------------------------------

def _flow_pwl(h: HFunction, t: float, z: float) -> float:
    """Exact flow for a piecewise-linear profile, walking down the segments."""
    pl = h.pwl
    xs, ys, slopes = pl.x.tolist(), pl.y.tolist(), pl.slopes.tolist()
    phi = z
    tau = t
    hv = float(h(phi))
    j = bisect.bisect_left(xs, phi) - 1  # xs[j] < phi
    while tau > 0:
        if hv == 0:
            return phi
        if j >= len(xs) - 1:
            x_lo, h_lo, s = xs[-1], ys[-1], float(pl.slope_right)
        elif j < 0:
            if pl.slope_left is None:
                return NEG_INF
            x_lo, h_lo, s = NEG_INF, NEG_INF, float(pl.slope_left)
        else:
            x_lo, h_lo, s = xs[j], ys[j], slopes[j]
        if s == 0:
            travel = (phi - x_lo) / -hv
            if travel >= tau:
                return phi + hv * tau
        else:
            root = phi - hv / s
            if math.isfinite(x_lo):
                ratio = h_lo / hv
                travel = INF if ratio <= 0 else math.log(ratio) / s
            else:
                travel = INF
            if travel >= tau:
                try:
                    return root + (phi - root) * math.exp(s * tau)
                except OverflowError:
                    return NEG_INF
        tau -= travel
        phi, hv = x_lo, h_lo
        if j == 0 and pl.slope_left is None and tau > 0:
            return NEG_INF
        j -= 1
    return phi


def _travel(h: HFunction, a: float, b: float, anchor: float, side: int) -> float:
    """Time to move from log-coordinate ``a`` to ``b`` (x = anchor + side*e^u)."""

    def integrand(u):
        e = math.exp(u)
        v = float(h(anchor + side * e))
        return e / -v if v < 0 else INF

    lo, hi = (a, b) if a < b else (b, a)
    with np.errstate(over="ignore"):
        val, _ = quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def _flow_smooth(h: HFunction, t: float, z: float, zeta_lo: float, zeta_hi: float) -> FlowResult:
    if z > zeta_hi:
        anchor, side = zeta_hi, +1
        u0 = math.log(z - zeta_hi)
        direction = -1  # u decreases as phi decreases
        u_end = math.log(SNAP * max(1.0, abs(zeta_hi)))
        if u0 <= u_end:
            # already inside the snap band: one Euler step is exact to O(distance^2)
            return FlowResult(max(anchor, z + t * float(h(z))), False)
    else:
        anchor, side = zeta_lo, -1
        u0 = math.log(zeta_lo - z)
        direction = +1
        u_end = math.log(zeta_lo - h.domain_lo) if math.isfinite(h.domain_lo) else 700.0
    spent = 0.0
    u = u0
    width = PANEL
    while True:
        nxt = u + direction * width
        width *= 1.6
        last = (direction < 0 and nxt <= u_end) or (direction > 0 and nxt >= u_end)
        if last:
            nxt = u_end
        dt = _travel(h, u, nxt, anchor, side)
        if spent + dt >= t:
            start = u
            base = spent

            def g(v):
                return base + _travel(h, start, v, anchor, side) - t

            root = brentq(g, u, nxt, xtol=1e-15, rtol=1e-15, maxiter=200)
            return FlowResult(anchor + side * math.exp(root), False)
        spent += dt
        u = nxt
        if last:
            if side > 0:
                return FlowResult(anchor, True)
            if math.isfinite(h.domain_lo) and h.lo_closed and abs(spent - t) <= 1e-14:
                return FlowResult(h.domain_lo, False)
            return FlowResult(NEG_INF, False)


def flow(dp: DynamicPenalty, t: float, z: float) -> FlowResult:
    """``F_t(z)``: the ODE solution at time ``t``; ``-inf`` once it leaves the domain."""
    t = float(t)
    z = float(z)
    if t < 0:
        raise InvalidParameters("time must be nonnegative")
    h = dp.h_d
    if math.isnan(z) or not math.isfinite(float(h(z))):
        return FlowResult(NEG_INF)
    lo, hi = dp.zeta_lo, dp.zeta_hi
    if lo <= z <= hi:
        return FlowResult(z, True)
    if t == 0:
        return FlowResult(z)
    if h.pwl is not None:
        v = _flow_pwl(h, t, z)
        return FlowResult(v, lo <= v <= hi)
    return _flow_smooth(h, t, z, lo, hi)


def inverse_flow(dp: DynamicPenalty, t: float, z: float) -> FlowResult:
    """Inverse of ``F_t`` via the reflected profile: ``-F~_t(-z)``."""
    r = flow(dp.reflected, t, -z)
    return FlowResult(-r.value, r.reached_fixed_point)


def flow_values(dp: DynamicPenalty, t: float, z) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    return np.array([flow(dp, t, v).value for v in arr.reshape(-1)]).reshape(arr.shape)


def h_s_from_dynamic(dp: DynamicPenalty, t: float = 1.0) -> HFunction:
    """Static profile induced by the growth penalty: ``F_t``, clamped above the domain."""
    h = dp.h_d
    z_lo, z_hi = dp.zeta_lo, dp.zeta_hi
    top = dp.d_hi
    top_value = flow(dp, t, top).value if math.isfinite(top) else INF
    lower, lower_closed = _static_lower_end(dp, t)

    def func(z: np.ndarray) -> np.ndarray:
        out = np.empty_like(z)
        for i, v in enumerate(z):
            out[i] = top_value if v > top else flow(dp, t, v).value
        return out

    def deriv(z: np.ndarray, side: int) -> np.ndarray:
        out = np.empty_like(z)
        for i, v in enumerate(z):
            if v > top or (v == top and side > 0):
                out[i] = 0.0
                continue
            hv = float(h(v))
            if hv < 0:
                out[i] = float(h(flow(dp, t, v).value)) / hv
            elif z_lo < v < z_hi or (v == z_lo and side > 0 and z_lo < z_hi) or (v == z_hi and side < 0 and z_lo < z_hi):
                out[i] = 1.0
            else:
                out[i] = _one_sided_fd(lambda w: flow(dp, t, w).value, v, side)
        return out

    meta = {"fixed_lo": z_lo, "fixed_hi": z_hi}
    if math.isfinite(top):
        meta.update({"sup": top_value, "argsup": top})
    return HFunction(
        func=func,
        domain_lo=lower,
        domain_hi=INF,
        lo_closed=lower_closed,
        hi_closed=False,
        kind="closed_form",
        tag=f"flow({dp.name})",
        dleft=lambda z: deriv(z, -1),
        dright=lambda z: deriv(z, +1),
        meta=meta,
    )


def _one_sided_fd(f, z: float, side: int, step: float = 1e-7) -> float:
    s = step * max(1.0, abs(z))
    d1 = side * (f(z + side * s) - f(z)) / s
    d2 = side * (f(z + side * s / 2) - f(z)) / (s / 2)
    return 2 * d2 - d1


def _static_lower_end(dp: DynamicPenalty, t: float) -> tuple[float, bool]:
    """Smallest start point whose trajectory stays in the domain up to time ``t``."""
    h = dp.h_d
    start = dp.zeta_lo
    if not math.isfinite(start):
        return NEG_INF, False

    def ok(z: float) -> bool:
        return math.isfinite(flow(dp, t, z).value)

    if math.isfinite(h.domain_lo):
        lo = h.domain_lo
        if ok(lo):
            return lo, h.lo_closed
    else:
        lo = start - 1.0
        while ok(lo):
            lo = start + 2 * (lo - start)
            if lo < -1e12:
                return NEG_INF, False
    hi = start
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * max(1.0, abs(hi)):
            break
    closed = math.isfinite(h.domain_lo) and h.lo_closed and ok(hi)
    if h.pwl is not None and h.pwl.slope_left is None:
        # exact lower end: the point that lands on the domain end at time t
        exact = inverse_flow(dp, t, h.domain_lo).value
        if math.isfinite(exact) and abs(exact - hi) <= 1e-9 * max(1.0, abs(hi)):
            return exact, True
    return hi, closed
