"""Concave scalar profiles.

One carrier type, ``HFunction``, holds every profile used in the library:
the static profiles (``h_S`` and its mirror), the dynamic growth profile
``h_D`` and the reconstructed profile ``q``.  A profile is a concave,
upper semi-continuous map into ``[-inf, inf)``; outside its effective domain
it evaluates to ``-inf``.

Three representations exist:

* ``closed_form``: vectorised callables for the value and, optionally, the
  one-sided derivatives;
* ``piecewise_linear``: strictly increasing breakpoints with values, plus an
  optional linear extension on either side;
* ``sampled``: the same mechanics as ``piecewise_linear`` on a dense grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

INF = math.inf
NEG_INF = -math.inf

Vectorised = Callable[[np.ndarray], np.ndarray]

# Step for finite-difference derivatives of profiles without analytic ones.
FD_STEP = 1e-6


def _as_array(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def _restore(out: np.ndarray, scalar: bool):
    return float(out[0]) if scalar else out


class PiecewiseLinear:
    """Continuous piecewise-linear map with optional linear extensions.

    ``slope_left``/``slope_right`` of ``None`` means the domain is closed at
    that end (value ``-inf`` beyond it).
    """

    def __init__(self, x, y, slope_left: float | None, slope_right: float | None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size == 0:
            raise ValueError("breakpoints and values must be 1-D arrays of equal nonzero length")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValueError("breakpoints and values must be finite")
        self.x = x
        self.y = y
        self.slopes = np.diff(y) / np.diff(x) if x.size > 1 else np.zeros(0)
        self.slope_left = slope_left
        self.slope_right = slope_right

    @property
    def lo(self) -> float:
        return NEG_INF if self.slope_left is not None else float(self.x[0])

    @property
    def hi(self) -> float:
        return INF if self.slope_right is not None else float(self.x[-1])

    def eval(self, z: np.ndarray) -> np.ndarray:
        x, y = self.x, self.y
        out = np.interp(z, x, y) if x.size > 1 else np.full(z.shape, y[0])
        below = z < x[0]
        above = z > x[-1]
        if np.any(below):
            out[below] = NEG_INF if self.slope_left is None else y[0] + self.slope_left * (z[below] - x[0])
        if np.any(above):
            out[above] = NEG_INF if self.slope_right is None else y[-1] + self.slope_right * (z[above] - x[-1])
        return out

    def _extended_slopes(self) -> np.ndarray:
        left = INF if self.slope_left is None else self.slope_left
        right = NEG_INF if self.slope_right is None else self.slope_right
        return np.concatenate([[left], self.slopes, [right]])

    def dleft(self, z: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.x, z, side="left")
        return self._extended_slopes()[idx]

    def dright(self, z: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.x, z, side="right")
        return self._extended_slopes()[idx]


@dataclass(frozen=True, eq=False)
class HFunction:
    """Concave profile with explicit effective domain.

    ``meta`` may carry exact structural constants (keys ``sup``, ``argsup``,
    ``inf``, ``fixed_lo``, ``fixed_hi``, ``zero_lo``, ``zero_hi``); missing
    ones are located numerically on first use.
    """

    func: Vectorised
    domain_lo: float = NEG_INF
    domain_hi: float = INF
    lo_closed: bool = False
    hi_closed: bool = False
    kind: str = "closed_form"
    tag: str = ""
    dleft: Vectorised | None = None
    dright: Vectorised | None = None
    pwl: PiecewiseLinear | None = None
    kinks: tuple[float, ...] = ()
    meta: Mapping[str, float] = field(default_factory=dict)

    # -- construction -----------------------------------------------------
    @classmethod
    def piecewise_linear(
        cls,
        breakpoints,
        values,
        *,
        slope_left: float | None = None,
        slope_right: float | None = None,
        extend_left: bool = True,
        extend_right: bool = True,
        kind: str = "piecewise_linear",
        tag: str = "",
        meta: Mapping[str, float] | None = None,
    ) -> "HFunction":
        """Build from breakpoints; extensions reuse the end slopes unless given."""
        x = np.asarray(breakpoints, dtype=float)
        y = np.asarray(values, dtype=float)
        if extend_left and slope_left is None:
            slope_left = float((y[1] - y[0]) / (x[1] - x[0])) if x.size > 1 else 0.0
        if extend_right and slope_right is None:
            slope_right = float((y[-1] - y[-2]) / (x[-1] - x[-2])) if x.size > 1 else 0.0
        pl = PiecewiseLinear(x, y, slope_left if extend_left else None, slope_right if extend_right else None)
        return cls(
            func=pl.eval,
            domain_lo=pl.lo,
            domain_hi=pl.hi,
            lo_closed=not extend_left,
            hi_closed=not extend_right,
            kind=kind,
            tag=tag,
            dleft=pl.dleft,
            dright=pl.dright,
            pwl=pl,
            kinks=tuple(float(v) for v in x) if kind == "piecewise_linear" else (),
            meta=dict(meta or {}),
        )

    # -- evaluation -------------------------------------------------------
    def in_domain(self, z) -> np.ndarray:
        arr = np.asarray(z, dtype=float)
        lo_ok = arr >= self.domain_lo if self.lo_closed else arr > self.domain_lo
        hi_ok = arr <= self.domain_hi if self.hi_closed else arr < self.domain_hi
        return lo_ok & hi_ok & ~np.isnan(arr)

    def __call__(self, z):
        arr, scalar = _as_array(z)
        out = np.full(arr.shape, NEG_INF)
        mask = self.in_domain(arr)
        if np.any(mask):
            out[mask] = self.func(arr[mask])
        return _restore(out, scalar)

    def _fd(self, arr: np.ndarray, side: int) -> np.ndarray:
        # Three-point one-sided difference, one Richardson step.
        def one(h):
            h = h * np.maximum(1.0, np.abs(arr))
            f0 = self(arr)
            f1 = self(arr - side * h)
            f2 = self(arr - 2 * side * h)
            return side * (3 * f0 - 4 * f1 + f2) / (2 * h)

        with np.errstate(invalid="ignore"):
            d1 = one(FD_STEP)
            d2 = one(FD_STEP / 2)
            return (4 * d2 - d1) / 3

    def deriv_left(self, z):
        arr, scalar = _as_array(z)
        out = self.dleft(arr) if self.dleft is not None else self._fd(arr, +1)
        return _restore(np.asarray(out, dtype=float), scalar)

    def deriv_right(self, z):
        arr, scalar = _as_array(z)
        out = self.dright(arr) if self.dright is not None else self._fd(arr, -1)
        return _restore(np.asarray(out, dtype=float), scalar)

    # -- structural constants ----------------------------------------------
    def _near_hi(self) -> float:
        return self.domain_hi if self.hi_closed else self.domain_hi - 1e-13 * max(1.0, abs(self.domain_hi))

    def _near_lo(self) -> float:
        return self.domain_lo if self.lo_closed else self.domain_lo + 1e-13 * max(1.0, abs(self.domain_lo))

    @cached_property
    def sup_value(self) -> float:
        """Supremum over the domain (the limit when not attained)."""
        if "sup" in self.meta:
            return float(self.meta["sup"])
        if self.pwl is not None:
            pl = self.pwl
            if pl.slope_right is None or pl.slope_right <= 0:
                return float(np.max(pl.y))
            return INF
        if math.isfinite(self.domain_hi):
            return float(self(self._near_hi()))
        big = 1e12
        if float(self.deriv_right(big)) <= 1e-9:
            return float(self(big))
        return INF

    @cached_property
    def argsup(self) -> float:
        """Smallest point where the supremum is attained (``inf`` if never)."""
        if "argsup" in self.meta:
            return float(self.meta["argsup"])
        s = self.sup_value
        if not math.isfinite(s):
            return INF
        if self.pwl is not None:
            pl = self.pwl
            idx = int(np.argmax(pl.y >= s))
            return float(pl.x[idx])
        lo = max(self._near_lo(), -1e12)
        hi = self._near_hi() if math.isfinite(self.domain_hi) else 1e12
        if self(hi) < s - 1e-12 * max(1.0, abs(s)):
            return INF
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self(mid) >= s - 1e-13 * max(1.0, abs(s)):
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-13 * max(1.0, abs(hi)):
                break
        return INF if hi > 1e9 else float(hi)

    @cached_property
    def inf_value(self) -> float:
        """Infimum over the domain (value or limit at the lower end)."""
        if "inf" in self.meta:
            return float(self.meta["inf"])
        if not math.isfinite(self.domain_lo):
            return NEG_INF
        v = float(self(self._near_lo()))
        if not self.lo_closed and float(self.deriv_right(self._near_lo())) > 1e6:
            return NEG_INF
        return v

    def _boundary_of_level_set(self, target: Callable[[float], bool], start: float, direction: int) -> float:
        """Farthest point from ``start`` along ``direction`` where ``target`` holds.

        Assumes the predicate holds on a connected set containing ``start``.
        """
        step = 1.0
        inside = start
        outside = None
        for _ in range(60):
            cand = start + direction * step
            if not target(cand):
                outside = cand
                break
            inside = cand
            step *= 4.0
        if outside is None:
            return direction * INF
        a, b = inside, outside
        for _ in range(200):
            mid = 0.5 * (a + b)
            if target(mid):
                a = mid
            else:
                b = mid
            if abs(b - a) <= 1e-12 * max(1.0, abs(a)):
                break
        return float(a)

    def _fixed(self, key: str, direction: int) -> float:
        if key in self.meta:
            return float(self.meta[key])
        if self.pwl is not None:
            pl = self.pwl
            ok = np.abs(pl.y - pl.x) <= 1e-14 * np.maximum(1.0, np.abs(pl.x))
            if direction > 0:
                ext = pl.slope_right
                if ok[-1] and ext is not None and ext == 1.0:
                    return INF
                cand = pl.x[ok & (pl.x >= 0)]
                return float(cand.max()) if cand.size else 0.0
            ext = pl.slope_left
            if ok[0] and ext is not None and ext == 1.0:
                return NEG_INF
            cand = pl.x[ok & (pl.x <= 0)]
            return float(cand.min()) if cand.size else 0.0

        def pred(z: float) -> bool:
            v = self(z)
            return bool(np.isfinite(v) and abs(v - z) <= 1e-13 * max(1.0, abs(z)))

        return self._boundary_of_level_set(pred, 0.0, direction)

    @cached_property
    def fixed_hi(self) -> float:
        """Largest fixed point (``h(z) = z``); 0 when only the origin is fixed."""
        return self._fixed("fixed_hi", +1)

    @cached_property
    def fixed_lo(self) -> float:
        return self._fixed("fixed_lo", -1)

    def _zero(self, key: str, direction: int) -> float:
        if key in self.meta:
            return float(self.meta[key])
        if self.pwl is not None:
            pl = self.pwl
            ok = np.abs(pl.y) <= 1e-15
            ext = pl.slope_right if direction > 0 else pl.slope_left
            end_ok = ok[-1] if direction > 0 else ok[0]
            if end_ok and ext is not None and ext == 0.0:
                return direction * INF
            cand = pl.x[ok & ((pl.x >= 0) if direction > 0 else (pl.x <= 0))]
            if cand.size == 0:
                return 0.0
            return float(cand.max() if direction > 0 else cand.min())

        def pred(z: float) -> bool:
            v = self(z)
            return bool(np.isfinite(v) and abs(v) <= 1e-14)

        return self._boundary_of_level_set(pred, 0.0, direction)

    @cached_property
    def zero_hi(self) -> float:
        """Upper end of the zero set (used for dynamic profiles)."""
        return self._zero("zero_hi", +1)

    @cached_property
    def zero_lo(self) -> float:
        return self._zero("zero_lo", -1)

    # -- grids and checks -------------------------------------------------
    def window(self, default: float = 10.0) -> tuple[float, float]:
        """Finite interval covering the interesting part of the domain."""
        lo = self.domain_lo if math.isfinite(self.domain_lo) else -default
        hi = self.domain_hi if math.isfinite(self.domain_hi) else default
        if math.isfinite(self.domain_lo) and not self.lo_closed:
            lo = lo + 1e-6 * max(1.0, abs(lo))
        if math.isfinite(self.domain_hi) and not self.hi_closed:
            hi = hi - 1e-6 * max(1.0, abs(hi))
        return lo, hi

    def grid(self, n: int = 512, default: float = 10.0) -> np.ndarray:
        lo, hi = self.window(default)
        return np.linspace(lo, hi, n)


def check_concave_monotone(
    h: HFunction, z: np.ndarray, *, tol: float = 1e-10, monotone: str = "increasing"
) -> list[str]:
    """Three-point concavity and two-point monotonicity on a uniform grid."""
    problems: list[str] = []
    v = h(z)
    finite = np.isfinite(v)
    if not np.all(finite):
        problems.append("profile is -inf inside the sampled window")
        z, v = z[finite], v[finite]
    scale = np.maximum(1.0, np.abs(v))
    mid = v[1:-1] - 0.5 * (v[:-2] + v[2:])
    if np.any(mid < -tol * scale[1:-1]):
        i = int(np.argmin(mid / scale[1:-1]))
        problems.append(f"concavity fails near z={z[i + 1]:.6g}")
    dv = np.diff(v)
    if monotone == "increasing" and np.any(dv < -tol * scale[1:]):
        problems.append("profile is not nondecreasing")
    return problems


def check_static_profile(h: HFunction, n: int = 512, tol: float = 1e-10) -> list[str]:
    """Invariants of an admissible static profile."""
    z = h.grid(n)
    problems = check_concave_monotone(h, z, tol=tol)
    if abs(float(h(0.0))) > 1e-12:
        problems.append("h(0) != 0")
    v = h(z)
    fin = np.isfinite(v)
    if np.any(v[fin] > z[fin] + tol * np.maximum(1.0, np.abs(z[fin]))):
        problems.append("h(z) > z somewhere")
    quotients = []
    for eps in (1e-3, 1e-4, 1e-5):
        quotients.append((float(h(eps)) - float(h(-eps))) / (2 * eps))
    extrapolated = quotients[-1] + (quotients[-1] - quotients[-2]) / 9.0
    if not math.isfinite(extrapolated) or abs(extrapolated - 1.0) > 1e-3:
        problems.append("slope at 0 differs from 1")
    return problems


def check_dynamic_profile(h: HFunction, n: int = 512, tol: float = 1e-10) -> list[str]:
    """Invariants of a growth profile: concave, nonpositive, peak 0 at 0."""
    problems: list[str] = []
    z = h.grid(n)
    v = h(z)
    fin = np.isfinite(v)
    zf, vf = z[fin], v[fin]
    scale = np.maximum(1.0, np.abs(vf))
    if np.any(vf > tol * scale):
        problems.append("h_D is positive somewhere")
    if abs(float(h(0.0))) > 1e-12:
        problems.append("h_D(0) != 0")
    mid = vf[1:-1] - 0.5 * (vf[:-2] + vf[2:])
    if vf.size > 2 and np.any(mid < -tol * scale[1:-1]):
        problems.append("h_D is not concave")
    neg, pos = zf <= 0, zf >= 0
    if np.any(np.diff(vf[neg]) < -tol * scale[neg][1:]):
        problems.append("h_D decreases on the negative axis")
    if np.any(np.diff(vf[pos]) > tol * scale[pos][1:]):
        problems.append("h_D increases on the positive axis")
    return problems


def vector_bisect(f: Vectorised, target: np.ndarray, lo: np.ndarray, hi: np.ndarray, iters: int = 200) -> np.ndarray:
    """Solve ``f(x) = target`` for nondecreasing ``f`` on brackets ``[lo, hi]``."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = f(mid) >= target
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


def _mirror_pwl(h: HFunction) -> HFunction:
    pl = h.pwl
    assert pl is not None
    x, y = pl.x, pl.y
    # Drop a flat tail: the mirror is closed at -sup there.
    keep = np.ones(x.size, dtype=bool)
    for i in range(1, x.size):
        if y[i] <= y[i - 1]:
            keep[i] = False
    xs, ys = x[keep], y[keep]
    flat_right = (not keep.all()) or (pl.slope_right is not None and pl.slope_right == 0.0)
    mx = -ys[::-1]
    my = -xs[::-1]
    if flat_right:
        slope_left = None
    elif pl.slope_right is None:
        slope_left = None
    else:
        slope_left = 1.0 / pl.slope_right
    if pl.slope_left is None:
        slope_right = 0.0
    else:
        slope_right = 1.0 / pl.slope_left if pl.slope_left != 0 else None
    return HFunction.piecewise_linear(
        mx,
        my,
        slope_left=slope_left,
        slope_right=slope_right,
        extend_left=slope_left is not None,
        extend_right=slope_right is not None,
        kind=h.kind,
        tag=f"mirror({h.tag})",
    )


def mirror(h: HFunction) -> HFunction:
    """The companion profile ``z -> -inf{x : h(x) >= -z}``.

    Exact for piecewise-linear profiles; closed forms fall back to
    vectorised bisection.
    """
    if h.pwl is not None:
        return _mirror_pwl(h)
    sup_h = h.sup_value
    lo_h = h.domain_lo
    inf_h = h.inf_value

    def func(w: np.ndarray) -> np.ndarray:
        target = -w
        out = np.empty_like(w)
        flat = target <= inf_h
        out[flat] = -lo_h
        rest = ~flat
        if np.any(rest):
            t = target[rest]
            lo = np.full(t.shape, h._near_lo() if math.isfinite(lo_h) else -1.0)
            if not math.isfinite(lo_h):
                while True:
                    bad = h(lo) > t
                    if not np.any(bad):
                        break
                    lo = np.where(bad, lo * 2 - 1, lo)
            hi = np.full(t.shape, 1.0)
            while True:
                bad = h(hi) < t
                if not np.any(bad):
                    break
                hi = np.where(bad, hi * 2 + 1, hi)
            out[rest] = -vector_bisect(h, t, lo, hi)
        return out

    def dfun(w: np.ndarray, side: str) -> np.ndarray:
        x = -func(w)
        d = h.deriv_right(x) if side == "left" else h.deriv_left(x)
        with np.errstate(divide="ignore"):
            return np.where(-w <= inf_h, 0.0, 1.0 / d)

    argsup_h = h.argsup
    return HFunction(
        func=func,
        domain_lo=-sup_h,
        domain_hi=INF,
        lo_closed=math.isfinite(argsup_h),
        hi_closed=False,
        kind=h.kind,
        tag=f"mirror({h.tag})",
        dleft=lambda w: dfun(w, "left"),
        dright=lambda w: dfun(w, "right"),
        meta={
            "sup": -lo_h,
            "argsup": -inf_h if math.isfinite(inf_h) else INF,
            "inf": -argsup_h if math.isfinite(argsup_h) else NEG_INF,
        },
    )
