"""Function catalog: evaluation, exact or adaptive integration, infima, truncation.

Every expression is an immutable node.  Nodes expose vectorised evaluation,
one-sided limits (needed for essential infima next to jumps), an exact
antiderivative where one is known, and level points for monotone members.
Expressions round-trip through a compact text form (see :func:`parse_expr`).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, NamedTuple

import numpy as np
from scipy import integrate as _quad
from scipy import special

from .domain import Grid, Interval, NumericConfig, log_grid, uniform_grid

Monotone = Literal["decreasing", "increasing"] | None


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class QuadResult(NamedTuple):
    value: float
    error: float
    exact: bool


def _arr(x):
    return np.asarray(x, dtype=float)


def _scalar_or_array(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


def _intersect(a: Interval | None, b: Interval | None) -> Interval | None:
    if a is None:
        return b
    if b is None:
        return a
    return a.intersect(b)


class FuncExpr:
    """Base class of the catalog.  Subclasses are frozen dataclasses."""

    @property
    def domain(self) -> Interval | None:
        return None

    @property
    def monotone(self) -> Monotone:
        return None

    @property
    def bounded(self) -> bool:
        return False

    @property
    def piecewise_constant(self) -> bool:
        return False

    @property
    def singular_left(self) -> bool:
        """True when the expression blows up (or jumps infinitely often) at ``x -> 0+``."""
        return False

    @property
    def is_constant(self) -> bool:
        return False

    # -- evaluation -----------------------------------------------------------------
    def __call__(self, x):
        raise NotImplementedError

    def left_limit(self, x):
        return self(x)

    def breakpoints(self) -> np.ndarray:
        """Jump locations inside the domain (finite list)."""
        return np.empty(0)

    # -- integration ----------------------------------------------------------------
    @property
    def has_exact_antiderivative(self) -> bool:
        if self.piecewise_constant and self._step_table is not None:
            return True
        try:
            self._primitive(_arr([0.5 * (self._probe_lo() + self._probe_hi())]))
        except NotImplementedError:
            return False
        return True

    def primitive(self, x):
        """An antiderivative evaluated at ``x``; may be ``-inf`` at a singular endpoint."""
        x = _arr(x)
        if self.piecewise_constant and self._step_table is not None:
            return self._step_primitive(x)
        with np.errstate(all="ignore"):
            return self._primitive(x)

    def _primitive(self, x):
        raise NotImplementedError

    # -- order structure ------------------------------------------------------------
    def level_point(self, c, strict: bool = False):
        """Boundary of the superlevel set ``{f >= c}`` (``{f > c}`` when strict).

        Decreasing members return ``sup{x: f(x) >= c}``, increasing ones
        ``inf{x: f(x) >= c}``; results are clamped to the domain.
        """
        if self.monotone is None:
            raise ValueError(f"{self.to_text()} has no monotone tag")
        return _bisect_level(self, _arr(c), strict)

    def ess_inf(self, a, b):
        """Essential infimum on the closed cells ``[a, b]`` (vectorised)."""
        a, b = np.broadcast_arrays(_arr(a), _arr(b))
        if self.is_constant:
            return np.full(a.shape, float(self(0.5 * (self._probe_lo() + self._probe_hi()))))
        if self.monotone == "decreasing":
            return _arr(self.left_limit(b))
        if self.monotone == "increasing":
            return _arr(self(a))
        if self.piecewise_constant and self._step_table is not None:
            return self._step_extreme(a, b, np.min)
        return self._sampled_extreme(a, b, sign=1.0)

    def ess_sup(self, a, b):
        a, b = np.broadcast_arrays(_arr(a), _arr(b))
        if self.is_constant:
            return np.full(a.shape, float(self(0.5 * (self._probe_lo() + self._probe_hi()))))
        if self.monotone == "decreasing":
            return _arr(self(a))
        if self.monotone == "increasing":
            return _arr(self.left_limit(b))
        if self.piecewise_constant and self._step_table is not None:
            return self._step_extreme(a, b, np.max)
        return -self._sampled_extreme(a, b, sign=-1.0)

    @property
    def inf_is_exact(self) -> bool:
        return self.monotone is not None or self.piecewise_constant

    # -- text form ------------------------------------------------------------------
    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.to_text()

    # -- helpers --------------------------------------------------------------------
    def _probe_lo(self) -> float:
        d = self.domain
        return 0.0 if d is None else d.lo

    def _probe_hi(self) -> float:
        d = self.domain
        return 1.0 if d is None else d.hi

    @cached_property
    def _step_table(self):
        """(starts, values, cumulative) for piecewise-constant expressions."""
        if not self.piecewise_constant:
            return None
        d = self.domain
        if d is None:
            return None
        bps = np.unique(self.breakpoints())
        bps = bps[(bps > d.lo) & (bps < d.hi)]
        starts = np.concatenate([[d.lo], bps])
        ends = np.concatenate([bps, [d.hi]])
        with np.errstate(divide="ignore"):
            geo = np.exp(0.5 * (np.log(np.abs(starts)) + np.log(np.abs(ends))))
        mids = np.where(starts > 0, geo, 0.5 * (starts + ends))
        mids = np.where((mids > starts) & (mids < ends), mids, 0.5 * (starts + ends))
        values = _arr(self(mids))
        cum = np.concatenate([[0.0], np.cumsum(values * (ends - starts))])
        return starts, values, cum

    def _step_primitive(self, x):
        starts, values, cum = self._step_table
        idx = np.clip(np.searchsorted(starts, x, side="right") - 1, 0, starts.size - 1)
        dx = x - starts[idx]
        with np.errstate(invalid="ignore"):
            part = np.where(dx == 0, 0.0, values[idx] * dx)
        return cum[idx] + part

    def _step_extreme(self, a, b, reducer):
        starts, values, _ = self._step_table
        ia = np.clip(np.searchsorted(starts, a, side="right") - 1, 0, starts.size - 1)
        ib = np.clip(np.searchsorted(starts, b, side="left") - 1, 0, starts.size - 1)
        ib = np.maximum(ib, ia)
        out = values[ia].copy()
        multi = np.flatnonzero(ib > ia)
        for i in multi:
            out.flat[i] = reducer(values[ia.flat[i] : ib.flat[i] + 1])
        return out

    def _sampled_extreme(self, a, b, sign: float):
        # Sampling plus one golden-section pass around the best sample; flagged inexact.
        out = np.empty(a.shape)
        for i, (lo, hi) in enumerate(zip(a.flat, b.flat)):
            xs = np.linspace(lo, hi, 33)
            if xs[0] <= 0 < xs[-1] or (self.domain is not None and xs[0] <= self.domain.lo):
                xs[0] = xs[0] + 1e-12 * (hi - lo)
            ys = sign * _arr(self(xs))
            k = int(np.nanargmin(ys))
            l, r = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
            best = ys[k]
            x, _ = golden_section(lambda t: -sign * float(self(t)), l, r, tol=1e-10 * max(hi - lo, 1e-300))
            best = min(best, sign * float(self(x)))
            out.flat[i] = best
        return sign * out


# ---------------------------------------------------------------------------------
# leaves
# ---------------------------------------------------------------------------------

_UNIT = Interval(0.0, 1.0)


@dataclass(frozen=True)
class Const(FuncExpr):
    c: float

    @property
    def monotone(self):
        return "decreasing"

    @property
    def bounded(self):
        return True

    @property
    def piecewise_constant(self):
        return True

    @property
    def is_constant(self):
        return True

    def __call__(self, x):
        return _scalar_or_array(x, np.full(np.shape(x), self.c, dtype=float))

    def _primitive(self, x):
        return self.c * x

    def primitive(self, x):
        return self.c * _arr(x)

    def level_point(self, c, strict=False):
        c = _arr(c)
        ok = self.c > c if strict else self.c >= c
        return np.where(ok, np.inf, -np.inf)

    def to_text(self):
        return f"const:{_fmt(self.c)}"


@dataclass(frozen=True)
class NegLog(FuncExpr):
    """``x -> -log x`` on (0, 1)."""

    @property
    def domain(self):
        return _UNIT

    @property
    def monotone(self):
        return "decreasing"

    @property
    def singular_left(self):
        return True

    def __call__(self, x):
        with np.errstate(divide="ignore"):
            return _scalar_or_array(x, -np.log(_arr(x)))

    def _primitive(self, x):
        return np.where(x > 0, x * (1.0 - np.log(np.where(x > 0, x, 1.0))), 0.0)

    def level_point(self, c, strict=False):
        with np.errstate(over="ignore"):
            return np.minimum(np.exp(-_arr(c)), 1.0)

    def to_text(self):
        return "neglog"


@dataclass(frozen=True)
class LogNegLog(FuncExpr):
    """``x -> log(-log x)`` on (0, 1)."""

    @property
    def domain(self):
        return _UNIT

    @property
    def monotone(self):
        return "decreasing"

    @property
    def singular_left(self):
        return True

    def __call__(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return _scalar_or_array(x, np.log(-np.log(_arr(x))))

    def _primitive(self, x):
        # With t = -log x: integral_0^x log(-log s) ds = x log t + E1(t).
        safe = np.where((x > 0) & (x < 1), x, 0.5)
        t = -np.log(safe)
        val = safe * np.log(t) + special.exp1(t)
        return np.where(x >= 1, -np.euler_gamma, np.where(x > 0, val, 0.0))

    def level_point(self, c, strict=False):
        with np.errstate(over="ignore"):
            return np.minimum(np.exp(-np.exp(_arr(c))), 1.0)

    def to_text(self):
        return "logneglog"


def neglog_power_primitive(x, r: int):
    """``integral_0^x (-log s)^r ds`` by the integration-by-parts recursion.

    With ``t = -log x`` the recursion ``F_r = t^r e^{-t} + r F_{r-1}``, ``F_0 = e^{-t}``
    unrolls to ``x * sum_j r!/j! t^j``.
    """
    x = _arr(x)
    safe = np.where(x > 0, x, 0.5)
    t = -np.log(safe)
    acc = np.ones_like(t)  # F_0 / x
    for j in range(1, r + 1):
        acc = t**j + j * acc
    return np.where(x > 0, safe * acc, 0.0)


@dataclass(frozen=True)
class NegLogPow(FuncExpr):
    """``x -> (-log x)^r`` on (0, 1) for a positive integer ``r``."""

    r: int

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("NegLogPow needs a positive integer exponent")
        object.__setattr__(self, "r", int(self.r))

    @property
    def domain(self):
        return _UNIT

    @property
    def monotone(self):
        return "decreasing"

    @property
    def singular_left(self):
        return True

    def __call__(self, x):
        with np.errstate(divide="ignore"):
            return _scalar_or_array(x, (-np.log(_arr(x))) ** self.r)

    def _primitive(self, x):
        return neglog_power_primitive(x, self.r)

    def level_point(self, c, strict=False):
        c = _arr(c)
        with np.errstate(over="ignore", invalid="ignore"):
            pt = np.exp(-np.maximum(c, 0.0) ** (1.0 / self.r))
        return np.where(c <= 0, 1.0, np.minimum(pt, 1.0))

    def to_text(self):
        return f"neglogpow({self.r})"


@dataclass(frozen=True, eq=False)
class JumpEta(FuncExpr):
    """``sum_n n * 1[a_{n+1}, a_n)`` for strictly decreasing levels ``a_n``.

    ``kind='geom_double'`` uses ``a_n = exp(-e^n)``; the level list stops at the
    last positive double, the rest of the tail is absorbed into the first cell.
    """

    levels: tuple
    kind: str = "explicit"

    def __post_init__(self):
        lv = tuple(float(a) for a in self.levels)
        if len(lv) < 1 or any(a <= 0 for a in lv) or any(b >= a for a, b in zip(lv, lv[1:])):
            raise ValueError("JumpEta levels must be positive and strictly decreasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def geom_double(cls) -> "JumpEta":
        levels = []
        n = 0
        while True:
            a = math.exp(-math.exp(n))
            if a <= 0.0 or a < 1e-300:
                break
            levels.append(a)
            n += 1
        return cls(tuple(levels), "geom_double")

    @cached_property
    def _lv(self):
        return np.asarray(self.levels)

    @property
    def domain(self):
        return Interval(0.0, self.levels[0])

    @property
    def monotone(self):
        return "decreasing"

    @property
    def bounded(self):
        return self.kind != "geom_double"

    @property
    def piecewise_constant(self):
        return True

    @property
    def singular_left(self):
        return self.kind == "geom_double"

    @property
    def tail_mass(self) -> float:
        """Upper bound on the mass dropped below the last stored level."""
        if self.kind != "geom_double":
            return 0.0
        n = len(self.levels) - 1
        return 2.0 * (n + 1) * self.levels[-1]

    def level(self, n):
        """``a_n`` (0 beyond the stored list)."""
        n = np.asarray(n)
        out = np.zeros(n.shape)
        inside = (n >= 0) & (n < len(self.levels))
        out[inside] = self._lv[n[inside].astype(int)]
        out[n < 0] = self.levels[0]
        return out

    def _count(self, x, side):
        # number of levels strictly above x (side='right') or >= x (side='left')
        rev = self._lv[::-1]
        if side == "right":
            return rev.size - np.searchsorted(rev, x, side="right")
        return rev.size - np.searchsorted(rev, x, side="left")

    def __call__(self, x):
        x = _arr(x)
        return _scalar_or_array(x, (self._count(x, "right") - 1).astype(float))

    def left_limit(self, x):
        x = _arr(x)
        return _scalar_or_array(x, (self._count(x, "left") - 1).astype(float))

    def breakpoints(self):
        return self._lv[1:].copy()

    def level_point(self, c, strict=False):
        c = _arr(c)
        n = np.floor(c) + 1 if strict else np.ceil(c)
        n = np.maximum(n, 0)
        return self.level(n)

    def to_text(self):
        if self.kind == "geom_double":
            return "jump"
        return "jump(" + ",".join(_fmt(a) for a in self.levels) + ")"


# ---------------------------------------------------------------------------------
# sampled data
# ---------------------------------------------------------------------------------

Interp = Literal["piecewise_constant_left", "piecewise_linear"]


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    interp: Interp = "piecewise_linear"
    prefix: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("values must match the grid node count")
        if self.interp not in ("piecewise_constant_left", "piecewise_linear"):
            raise ValueError(f"unknown interpolation {self.interp!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.prefix is not None:
            p = np.asarray(self.prefix, dtype=float)
            if p.shape != v.shape:
                raise ValueError("prefix must match the grid node count")
            p.setflags(write=False)
            object.__setattr__(self, "prefix", p)

    @property
    def nodes(self):
        return self.grid.nodes

    def with_prefix(self) -> "GridFunction":
        x, v = self.grid.nodes, self.values
        h = np.diff(x)
        if self.interp == "piecewise_linear":
            cells = 0.5 * h * (v[:-1] + v[1:])
        else:
            cells = h * v[:-1]
        prefix = np.concatenate([[0.0], np.cumsum(cells)])
        return GridFunction(self.grid, v, self.interp, prefix)

    def to_dict(self) -> dict:
        out = {"nodes": self.grid.nodes.tolist(), "values": self.values.tolist(), "interp": self.interp}
        if self.prefix is not None:
            out["prefix"] = self.prefix.tolist()
        return out


@dataclass(frozen=True, eq=False)
class Sampled(FuncExpr):
    data: GridFunction

    @property
    def _x(self):
        return self.data.grid.nodes

    @property
    def _v(self):
        return self.data.values

    @property
    def domain(self):
        return Interval(self._x[0], self._x[-1])

    @cached_property
    def _mono(self):
        v = self._v if self.data.interp == "piecewise_linear" else self._v[:-1]
        d = np.diff(v)
        if np.all(d <= 0):
            return "decreasing"
        if np.all(d >= 0):
            return "increasing"
        return None

    @property
    def monotone(self):
        return self._mono

    @property
    def bounded(self):
        return True

    @property
    def piecewise_constant(self):
        return self.data.interp == "piecewise_constant_left"

    @property
    def is_constant(self):
        v = self._v if self.data.interp == "piecewise_linear" else self._v[:-1]
        return bool(np.all(v == v[0]))

    def __call__(self, x):
        xa = _arr(x)
        if self.data.interp == "piecewise_linear":
            return _scalar_or_array(x, np.interp(xa, self._x, self._v))
        idx = np.clip(np.searchsorted(self._x, xa, side="right") - 1, 0, self._x.size - 2)
        return _scalar_or_array(x, self._v[idx])

    def left_limit(self, x):
        if self.data.interp == "piecewise_linear":
            return self(x)
        xa = _arr(x)
        idx = np.clip(np.searchsorted(self._x, xa, side="left") - 1, 0, self._x.size - 2)
        return _scalar_or_array(x, self._v[idx])

    def breakpoints(self):
        if self.data.interp == "piecewise_linear":
            return np.empty(0)
        v = self._v[:-1]
        jumps = np.nonzero(np.diff(v) != 0)[0] + 1
        return self._x[jumps].copy()

    def _primitive(self, x):
        # piecewise-linear: exact trapezoid integral of the interpolant
        xs, v = self._x, self._v
        h = np.diff(xs)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[:-1] + v[1:]))])
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        dx = x - xs[idx]
        slope = (v[idx + 1] - v[idx]) / h[idx]
        return cum[idx] + v[idx] * dx + 0.5 * slope * dx * dx

    def ess_inf(self, a, b):
        if self.data.interp == "piecewise_linear" and self.monotone is None:
            return self._pwl_extreme(a, b, np.min)
        return super().ess_inf(a, b)

    def ess_sup(self, a, b):
        if self.data.interp == "piecewise_linear" and self.monotone is None:
            return self._pwl_extreme(a, b, np.max)
        return super().ess_sup(a, b)

    def _pwl_extreme(self, a, b, reducer):
        a, b = np.broadcast_arrays(_arr(a), _arr(b))
        ends = reducer(np.stack([self(a), self(b)]), axis=0)
        ia = np.searchsorted(self._x, a, side="right")
        ib = np.searchsorted(self._x, b, side="left")
        out = np.array(ends, dtype=float)
        for i in np.flatnonzero(ib > ia):
            out.flat[i] = reducer(np.concatenate([[out.flat[i]], self._v[ia.flat[i] : ib.flat[i]]]))
        return out

    @property
    def inf_is_exact(self):
        return True

    def level_point(self, c, strict=False):
        tag = self.monotone
        if tag is None:
            raise ValueError(f"{self.to_text()} has no monotone tag")
        c = _arr(c)
        xs = self._x
        pc = self.data.interp == "piecewise_constant_left"
        v = self._v[:-1] if pc else self._v
        if tag == "decreasing":
            # nodes/cells with v >= c (v > c when strict) form a prefix
            count = np.searchsorted(-v, -c, side="left" if strict else "right")
        else:
            # nodes/cells with v < c (v <= c when strict) form a prefix
            count = np.searchsorted(v, c, side="right" if strict else "left")
        if pc:
            return xs[np.clip(count, 0, v.size)] if tag == "decreasing" else xs[np.clip(count, 0, v.size)]
        n = v.size
        k = np.clip(count, 1, n - 1)
        x0, x1, v0, v1 = xs[k - 1], xs[k], v[k - 1], v[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(v1 != v0, (c - v0) / (v1 - v0), 1.0)
        out = x0 + np.clip(frac, 0.0, 1.0) * (x1 - x0)
        return np.where(count <= 0, xs[0], np.where(count >= n, xs[-1], out))

    def to_text(self):
        name = "pwl" if self.data.interp == "piecewise_linear" else "step"
        vals = self._v if self.data.interp == "piecewise_linear" else self._v[:-1]
        return f"{name}(" + ",".join(_fmt(x) for x in self._x) + ";" + ",".join(_fmt(v) for v in vals) + ")"


def step_function(breaks, values) -> Sampled:
    """Piecewise constant function: ``values[i]`` on ``[breaks[i], breaks[i+1])``."""
    breaks = _arr(breaks)
    values = _arr(values)
    if values.size != breaks.size - 1:
        raise ValueError("need len(values) == len(breaks) - 1")
    v = np.concatenate([values, values[-1:]])
    return Sampled(GridFunction(Grid(breaks), v, "piecewise_constant_left"))


def pwl_function(nodes, values) -> Sampled:
    return Sampled(GridFunction(Grid(_arr(nodes)), _arr(values), "piecewise_linear"))


# ---------------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------------


def _flip(tag: Monotone) -> Monotone:
    return {"decreasing": "increasing", "increasing": "decreasing"}.get(tag)


def _clip_primitive(f: FuncExpr, lo_val: float, hi_val: float, x):
    """Antiderivative of ``clip(f, lo_val, hi_val)`` for monotone ``f`` with a primitive."""
    d = f.domain
    if d is None:
        raise NotImplementedError
    x = np.clip(_arr(x), d.lo, d.hi)
    inc = f.monotone == "increasing"
    # p_hi: boundary of {f >= hi_val}; p_lo: boundary of {f > lo_val}
    p_hi = float(np.clip(f.level_point(hi_val), d.lo, d.hi))
    p_lo = float(np.clip(f.level_point(lo_val, strict=True), d.lo, d.hi))
    if inc:
        # f <= lo_val on [lo, p_lo), middle on [p_lo, p_hi), f >= hi_val after
        a, b = p_lo, max(p_hi, p_lo)
        Fa = float(f.primitive(a)) if b > a else 0.0
        xm = np.clip(x, a, b)
        mid = np.where(xm > a, f.primitive(np.where(xm > a, xm, b)) - Fa, 0.0) if b > a else 0.0
        return lo_val * (np.minimum(x, a) - a) + mid + hi_val * (np.maximum(x, b) - b)
    # decreasing: f >= hi_val on (lo, p_hi], middle on (p_hi, p_lo], f <= lo_val after
    a, b = p_hi, max(p_lo, p_hi)
    Fa = float(f.primitive(a)) if b > a else 0.0
    xm = np.clip(x, a, b)
    mid = np.where(xm > a, f.primitive(np.where(xm > a, xm, b)) - Fa, 0.0) if b > a else 0.0
    return hi_val * (np.minimum(x, a) - a) + mid + lo_val * (np.maximum(x, b) - b)


@dataclass(frozen=True)
class Truncate(FuncExpr):
    """``T_k f``: pointwise clamp of ``f`` to ``[-k, k]``."""

    inner: FuncExpr
    k: float

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError("truncation level must be non-negative")

    @property
    def domain(self):
        return self.inner.domain

    @property
    def monotone(self):
        return self.inner.monotone

    @property
    def bounded(self):
        return True

    @property
    def piecewise_constant(self):
        return self.inner.piecewise_constant

    @property
    def is_constant(self):
        return self.inner.is_constant or self.k == 0

    def __call__(self, x):
        return _scalar_or_array(x, np.clip(_arr(self.inner(x)), -self.k, self.k))

    def left_limit(self, x):
        return _scalar_or_array(x, np.clip(_arr(self.inner.left_limit(x)), -self.k, self.k))

    def breakpoints(self):
        return self.inner.breakpoints()

    def _primitive(self, x):
        if self.inner.monotone is None or self.k == 0 and self.inner.domain is None:
            raise NotImplementedError
        if self.k == 0:
            return 0.0 * x
        return _clip_primitive(self.inner, -self.k, self.k, x)

    def ess_inf(self, a, b):
        return np.clip(self.inner.ess_inf(a, b), -self.k, self.k)

    def ess_sup(self, a, b):
        return np.clip(self.inner.ess_sup(a, b), -self.k, self.k)

    def level_point(self, c, strict=False):
        c = _arr(c)
        out = _arr(self.inner.level_point(c, strict))
        d = self.domain
        inc = self.monotone == "increasing"
        above = (c > self.k) | ((c == self.k) & strict)
        below = (c < -self.k) | ((c == -self.k) & ~np.asarray(strict))
        empty = d.lo if not inc else d.hi
        full = d.hi if not inc else d.lo
        return np.where(above, empty, np.where(below, full, out))

    def to_text(self):
        return f"trunc({self.inner.to_text()}, {_fmt(self.k)})"


@dataclass(frozen=True)
class TruncationResidual(FuncExpr):
    """``f - T_k f``; keeps the monotone direction of ``f``."""

    inner: FuncExpr
    k: float

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError("truncation level must be non-negative")

    @property
    def domain(self):
        return self.inner.domain

    @property
    def monotone(self):
        return self.inner.monotone

    @property
    def bounded(self):
        return self.inner.bounded

    @property
    def piecewise_constant(self):
        return self.inner.piecewise_constant

    @property
    def singular_left(self):
        return self.inner.singular_left

    def _map(self, v):
        v = _arr(v)
        return v - np.clip(v, -self.k, self.k)

    def __call__(self, x):
        return _scalar_or_array(x, self._map(self.inner(x)))

    def left_limit(self, x):
        return _scalar_or_array(x, self._map(self.inner.left_limit(x)))

    def breakpoints(self):
        return self.inner.breakpoints()

    def _primitive(self, x):
        # anchored at the domain's left end so tiny supports near 0 keep full precision
        f, k, d = self.inner, self.k, self.inner.domain
        if f.monotone is None or d is None:
            raise NotImplementedError
        x = np.clip(_arr(x), d.lo, d.hi)
        F0 = float(f.primitive(d.lo))
        if not math.isfinite(F0):
            raise NotImplementedError
        p_up = float(np.clip(f.level_point(k), d.lo, d.hi))
        p_dn = float(np.clip(f.level_point(-k, strict=True), d.lo, d.hi))
        if f.monotone == "decreasing":
            # f - k on (lo, p_up], f + k on [p_dn, hi)
            u = np.minimum(x, p_up)
            out = np.where(u > d.lo, f.primitive(np.maximum(u, d.lo)) - F0 - k * (u - d.lo), 0.0)
            if p_dn < d.hi:
                v = np.maximum(x, p_dn)
                out = out + np.where(v > p_dn, f.primitive(v) - float(f.primitive(p_dn)) + k * (v - p_dn), 0.0)
            return out
        # increasing: f + k on (lo, p_dn), f - k on [p_up, hi)
        u = np.minimum(x, p_dn)
        out = np.where(u > d.lo, f.primitive(np.maximum(u, d.lo)) - F0 + k * (u - d.lo), 0.0)
        if p_up < d.hi:
            v = np.maximum(x, p_up)
            out = out + np.where(v > p_up, f.primitive(v) - float(f.primitive(p_up)) - k * (v - p_up), 0.0)
        return out

    def ess_inf(self, a, b):
        return self._map(self.inner.ess_inf(a, b))

    def ess_sup(self, a, b):
        return self._map(self.inner.ess_sup(a, b))

    def level_point(self, c, strict=False):
        c = _arr(c)
        # g >= c with c > 0  <=>  f >= c + k ; with c < 0  <=>  f >= c - k ; c == 0 needs f >= -k
        shifted = np.where(c > 0, c + self.k, np.where(c < 0, c - self.k, -self.k))
        if np.any(c == 0) and strict:
            shifted = np.where(c == 0, self.k, shifted)
        return self.inner.level_point(shifted, strict)

    def to_text(self):
        return f"resid({self.inner.to_text()}, {_fmt(self.k)})"


@dataclass(frozen=True)
class Sum(FuncExpr):
    left: FuncExpr
    right: FuncExpr

    @property
    def domain(self):
        return _intersect(self.left.domain, self.right.domain)

    @property
    def monotone(self):
        a, b = self.left, self.right
        if a.is_constant:
            return b.monotone
        if b.is_constant:
            return a.monotone
        return a.monotone if a.monotone == b.monotone else None

    @property
    def bounded(self):
        return self.left.bounded and self.right.bounded

    @property
    def piecewise_constant(self):
        return self.left.piecewise_constant and self.right.piecewise_constant

    @property
    def is_constant(self):
        return self.left.is_constant and self.right.is_constant

    @property
    def singular_left(self):
        return self.left.singular_left or self.right.singular_left

    def __call__(self, x):
        return _scalar_or_array(x, _arr(self.left(x)) + _arr(self.right(x)))

    def left_limit(self, x):
        return _scalar_or_array(x, _arr(self.left.left_limit(x)) + _arr(self.right.left_limit(x)))

    def breakpoints(self):
        return np.concatenate([self.left.breakpoints(), self.right.breakpoints()])

    def _primitive(self, x):
        return self.left._primitive_checked(x) + self.right._primitive_checked(x)

    def ess_inf(self, a, b):
        if self.right.is_constant:
            return self.left.ess_inf(a, b) + self.right.ess_inf(a, b)
        if self.left.is_constant:
            return self.right.ess_inf(a, b) + self.left.ess_inf(a, b)
        return super().ess_inf(a, b)

    def ess_sup(self, a, b):
        if self.right.is_constant:
            return self.left.ess_sup(a, b) + self.right.ess_sup(a, b)
        if self.left.is_constant:
            return self.right.ess_sup(a, b) + self.left.ess_sup(a, b)
        return super().ess_sup(a, b)

    def level_point(self, c, strict=False):
        if self.right.is_constant:
            return self.left.level_point(_arr(c) - self.right(0.0), strict)
        if self.left.is_constant:
            return self.right.level_point(_arr(c) - self.left(0.0), strict)
        return super().level_point(c, strict)

    def to_text(self):
        return f"sum({self.left.to_text()}, {self.right.to_text()})"


@dataclass(frozen=True)
class Scale(FuncExpr):
    """Multiplication by a positive constant; signs go through :class:`Negate`."""

    inner: FuncExpr
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("Scale needs c > 0; use Negate for sign changes")

    @property
    def domain(self):
        return self.inner.domain

    @property
    def monotone(self):
        return self.inner.monotone

    @property
    def bounded(self):
        return self.inner.bounded

    @property
    def piecewise_constant(self):
        return self.inner.piecewise_constant

    @property
    def is_constant(self):
        return self.inner.is_constant

    @property
    def singular_left(self):
        return self.inner.singular_left

    def __call__(self, x):
        return _scalar_or_array(x, self.c * _arr(self.inner(x)))

    def left_limit(self, x):
        return _scalar_or_array(x, self.c * _arr(self.inner.left_limit(x)))

    def breakpoints(self):
        return self.inner.breakpoints()

    def _primitive(self, x):
        return self.c * self.inner._primitive_checked(x)

    def ess_inf(self, a, b):
        return self.c * self.inner.ess_inf(a, b)

    def ess_sup(self, a, b):
        return self.c * self.inner.ess_sup(a, b)

    def level_point(self, c, strict=False):
        return self.inner.level_point(_arr(c) / self.c, strict)

    def to_text(self):
        return f"scale({self.inner.to_text()}, {_fmt(self.c)})"


@dataclass(frozen=True)
class Negate(FuncExpr):
    inner: FuncExpr

    @property
    def domain(self):
        return self.inner.domain

    @property
    def monotone(self):
        if self.inner.is_constant:
            return "decreasing"
        return _flip(self.inner.monotone)

    @property
    def bounded(self):
        return self.inner.bounded

    @property
    def piecewise_constant(self):
        return self.inner.piecewise_constant

    @property
    def is_constant(self):
        return self.inner.is_constant

    @property
    def singular_left(self):
        return self.inner.singular_left

    def __call__(self, x):
        return _scalar_or_array(x, -_arr(self.inner(x)))

    def left_limit(self, x):
        return _scalar_or_array(x, -_arr(self.inner.left_limit(x)))

    def breakpoints(self):
        return self.inner.breakpoints()

    def _primitive(self, x):
        return -self.inner._primitive_checked(x)

    def ess_inf(self, a, b):
        return -self.inner.ess_sup(a, b)

    def ess_sup(self, a, b):
        return -self.inner.ess_inf(a, b)

    def level_point(self, c, strict=False):
        if self.inner.monotone is None:
            return super().level_point(c, strict)
        # {-f >= c} = {f <= -c}; its boundary is the boundary of {f > -c}
        return self.inner.level_point(-_arr(c), not strict)

    def to_text(self):
        return f"neg({self.inner.to_text()})"


def _gamma_upper(p: float, t):
    """``integral_t^inf u^p e^{-u} du`` (unregularised upper incomplete gamma)."""
    t = _arr(t)
    with np.errstate(all="ignore"):
        if p + 1 < 170:
            return special.gamma(p + 1) * special.gammaincc(p + 1, t)
        return np.exp(special.gammaln(p + 1) + np.log(special.gammaincc(p + 1, t)))


@dataclass(frozen=True)
class ExpScale(FuncExpr):
    """``x -> exp((inner(x) - shift) / mu)``.

    ``shift`` only rescales by a positive constant, which leaves A1 constants and
    Coifman-Rochberg factors unchanged; it keeps the exponential in range.
    """

    inner: FuncExpr
    mu: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("ExpScale needs mu > 0")

    @property
    def p(self) -> float:
        return 1.0 / self.mu

    @property
    def domain(self):
        return self.inner.domain

    @property
    def monotone(self):
        return self.inner.monotone

    @property
    def bounded(self):
        return self.inner.bounded

    @property
    def piecewise_constant(self):
        return self.inner.piecewise_constant

    @property
    def is_constant(self):
        return self.inner.is_constant

    @property
    def singular_left(self):
        return self.inner.singular_left

    def _map(self, v):
        with np.errstate(over="ignore"):
            return np.exp((_arr(v) - self.shift) / self.mu)

    def __call__(self, x):
        return _scalar_or_array(x, self._map(self.inner(x)))

    def left_limit(self, x):
        return _scalar_or_array(x, self._map(self.inner.left_limit(x)))

    def breakpoints(self):
        return self.inner.breakpoints()

    def _primitive(self, x):
        inner, p = self.inner, self.p
        scale = math.exp(-self.shift / self.mu) if -self.shift / self.mu < 700 else math.inf
        if isinstance(inner, Const):
            return float(self._map(inner.c)) * x
        if isinstance(inner, LogNegLog):
            if abs(p - round(p)) < 1e-12 and round(p) >= 1:
                return scale * neglog_power_primitive(x, int(round(p)))
            safe = np.where(x > 0, x, 0.5)
            val = _gamma_upper(p, -np.log(safe))
            return scale * np.where(x > 0, val, 0.0)
        if isinstance(inner, NegLog):
            safe = np.where(x > 0, x, 1.0)
            if p == 1.0:
                val = np.where(x > 0, np.log(safe), -np.inf)
            else:
                val = np.where(x > 0, safe ** (1.0 - p) / (1.0 - p), 0.0 if p < 1 else -np.inf)
            return scale * val
        if isinstance(inner, Sampled) and inner.data.interp == "piecewise_linear":
            return self._pwl_primitive(x)
        raise NotImplementedError

    def _pwl_primitive(self, x):
        # exact per segment: int e^{u} over a linear u is h e^{u0} expm1(d)/d, d = u1 - u0
        xs = self.inner.data.grid.nodes
        u = (self.inner.data.values - self.shift) / self.mu
        h = np.diff(xs)

        def seg(u0, du, dx):
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                r = np.where(du != 0, np.expm1(du) / np.where(du != 0, du, 1.0), 1.0)
                return dx * np.exp(u0) * r

        cum = np.concatenate([[0.0], np.cumsum(seg(u[:-1], u[1:] - u[:-1], h))])
        x = np.clip(_arr(x), xs[0], xs[-1])
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        dx = x - xs[idx]
        slope = (u[idx + 1] - u[idx]) / h[idx]
        return cum[idx] + seg(u[idx], slope * dx, dx)

    def ess_inf(self, a, b):
        return self._map(self.inner.ess_inf(a, b))

    def ess_sup(self, a, b):
        return self._map(self.inner.ess_sup(a, b))

    def level_point(self, c, strict=False):
        c = _arr(c)
        with np.errstate(divide="ignore"):
            target = np.where(c > 0, self.shift + self.mu * np.log(np.where(c > 0, c, 1.0)), -np.inf)
        return self.inner.level_point(target, strict)

    def to_text(self):
        if self.shift:
            return f"expscale({self.inner.to_text()}, {_fmt(self.mu)}, {_fmt(self.shift)})"
        return f"expscale({self.inner.to_text()}, {_fmt(self.mu)})"


@dataclass(frozen=True)
class Power(FuncExpr):
    """``x -> inner(x) ** q`` for a positive inner function; prefer :func:`power`."""

    inner: FuncExpr
    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("Power needs q > 0")

    @property
    def domain(self):
        return self.inner.domain

    @property
    def monotone(self):
        return self.inner.monotone

    @property
    def bounded(self):
        return self.inner.bounded

    @property
    def piecewise_constant(self):
        return self.inner.piecewise_constant

    @property
    def is_constant(self):
        return self.inner.is_constant

    @property
    def singular_left(self):
        return self.inner.singular_left

    def _map(self, v):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.abs(_arr(v)) ** self.q

    def __call__(self, x):
        return _scalar_or_array(x, self._map(self.inner(x)))

    def left_limit(self, x):
        return _scalar_or_array(x, self._map(self.inner.left_limit(x)))

    def breakpoints(self):
        return self.inner.breakpoints()

    def ess_inf(self, a, b):
        return self._map(self.inner.ess_inf(a, b))

    def ess_sup(self, a, b):
        return self._map(self.inner.ess_sup(a, b))

    def level_point(self, c, strict=False):
        c = _arr(c)
        return self.inner.level_point(np.sign(c) * np.abs(c) ** (1.0 / self.q), strict)

    def to_text(self):
        return f"pow({self.inner.to_text()}, {_fmt(self.q)})"


def _primitive_checked(self, x):
    if self.piecewise_constant and self._step_table is not None:
        return self._step_primitive(x)
    return self._primitive(x)


FuncExpr._primitive_checked = _primitive_checked


# ---------------------------------------------------------------------------------
# constructors with light canonicalisation
# ---------------------------------------------------------------------------------


def exp_scale(f: FuncExpr, mu: float, shift: float = 0.0) -> FuncExpr:
    """``exp((f - shift)/mu)`` rewritten so exact antiderivatives stay reachable."""
    if isinstance(f, Scale):
        return exp_scale(f.inner, mu / f.c, shift / f.c)
    if isinstance(f, Sum) and f.right.is_constant and not f.left.is_constant:
        return exp_scale(f.left, mu, shift - float(f.right(0.0)))
    if isinstance(f, Sum) and f.left.is_constant and not f.right.is_constant:
        return exp_scale(f.right, mu, shift - float(f.left(0.0)))
    if isinstance(f, NegLogPow) and f.r == 1:
        return ExpScale(NegLog(), mu, shift)
    return ExpScale(f, mu, shift)


def power(f: FuncExpr, q: float) -> FuncExpr:
    """``f ** q`` for positive ``f``, mapped onto catalog forms where possible."""
    if q == 1:
        return f
    if isinstance(f, Const):
        return Const(abs(f.c) ** q)
    if isinstance(f, NegLog):
        return power(NegLogPow(1), q)
    if isinstance(f, NegLogPow):
        rq = f.r * q
        if abs(rq - round(rq)) < 1e-12 and round(rq) >= 1:
            return NegLogPow(int(round(rq)))
        return ExpScale(LogNegLog(), 1.0 / rq)
    if isinstance(f, ExpScale):
        return ExpScale(f.inner, f.mu / q, f.shift)
    if isinstance(f, Scale):
        return Scale(power(f.inner, q), f.c**q)
    if isinstance(f, Power):
        return power(f.inner, f.q * q)
    return Power(f, q)


def truncate(f: FuncExpr, k: float) -> FuncExpr:
    if k < 0:
        raise ValueError("truncation level must be non-negative")
    if isinstance(f, Const):
        return Const(float(np.clip(f.c, -k, k)))
    return Truncate(f, k)


# ---------------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------------


def _check_inside(f: FuncExpr, I: Interval):
    d = f.domain
    if d is not None and not d.contains(I):
        raise ValueError(f"interval ({I.lo}, {I.hi}) is outside the domain of {f.to_text()}")


def evaluate(f: FuncExpr, x: float) -> float:
    d = f.domain
    if d is not None:
        if not d.lo <= x <= d.hi:
            raise ValueError(f"x={x} outside the domain of {f.to_text()}")
        if x == d.lo and f.singular_left:
            raise ValueError(f"x={x} is a singular endpoint of {f.to_text()}")
    return float(f(x))


def integrate(f: FuncExpr, I: Interval, cfg: NumericConfig | None = None) -> QuadResult:
    """Integral over ``I``; exact when an antiderivative is known, QUADPACK otherwise."""
    cfg = cfg or NumericConfig()
    _check_inside(f, I)
    try:
        F = f.primitive(np.array([I.lo, I.hi]))
        val = float(F[1] - F[0])
        if not math.isnan(val):
            tail = getattr(f, "tail_mass", 0.0) if I.lo == 0 else 0.0
            return QuadResult(val, 4e-16 * abs(val) + tail, True)
    except NotImplementedError:
        pass
    return _adaptive(f, I.lo, I.hi, cfg.quad_rel_tol)


def _kinks(f: FuncExpr) -> np.ndarray:
    # jumps plus the nodes of every piecewise-linear leaf; quadrature splits there
    out = [_arr(f.breakpoints())]
    if isinstance(f, Sampled) and f.data.interp == "piecewise_linear":
        out.append(f.data.grid.nodes)
    for name in ("inner", "left", "right"):
        child = getattr(f, name, None)
        if isinstance(child, FuncExpr):
            out.append(_kinks(child))
    return np.unique(np.concatenate(out))


def _adaptive(f: FuncExpr, a: float, b: float, rel_tol: float) -> QuadResult:
    pts = _kinks(f)
    pts = pts[(pts > a) & (pts < b)]
    floor_mass = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if a == 0 and f.singular_left:
            # x = b e^{-s}: integral = b * integral_0^inf f(b e^{-s}) e^{-s} ds
            def g(s):
                w = math.exp(-s)
                x = b * w
                # past the underflow point the weight e^{-s} wins for any integrable f
                return float(f(x)) * w if x > 0 else 0.0

            s_pts = sorted(np.log(b / pts)) if pts.size else []
            s_last = s_pts[-1] if s_pts else 0.0
            val, err = 0.0, 0.0
            if s_pts:
                val, err = _quad.quad(g, 0.0, s_last, points=s_pts[:-1] or None, epsabs=0.0, epsrel=rel_tol, limit=400)
            v2, e2 = _quad.quad(g, s_last, np.inf, epsabs=0.0, epsrel=rel_tol, limit=400)
            val, err = b * (val + v2), b * (err + e2)
        else:
            L = b - a
            u_pts = list((pts - a) / L)
            # near a sign change the integral can vanish; measure error against the size of |f|
            mag = float(np.max(np.abs(_arr(f(a + L * np.array([0.25, 0.5, 0.75]))))))
            floor = 1e-3 * mag if math.isfinite(mag) else 0.0
            val, err = _quad.quad(lambda u: float(f(a + L * u)), 0.0, 1.0, points=u_pts or None,
                                  epsabs=rel_tol * floor, epsrel=rel_tol, limit=400)
            val, err, floor_mass = L * val, L * err, L * floor
    scale = max(abs(val), floor_mass)
    # averages good to 1e-14 absolute are at the level of evaluation noise anyway
    noise = 1e-14 * (b - a)
    if not math.isfinite(val) or err > max(1e3 * rel_tol * scale, noise) + 1e-12 * scale:
        if not (math.isfinite(val) and err <= 1e-7 * max(scale, 1e-300)):
            raise QuadratureError(f"quadrature failed for {f.to_text()} on ({a}, {b}): value={val}, err={err}")
    return QuadResult(float(val), float(err), False)


def average(f: FuncExpr, I: Interval, cfg: NumericConfig | None = None) -> float:
    return integrate(f, I, cfg).value / I.length


def infimum(f: FuncExpr, I: Interval) -> float:
    """Essential infimum over ``I``; exact for monotone and step members."""
    _check_inside(f, I)
    return float(f.ess_inf(I.lo, I.hi))


def cell_integrals(f: FuncExpr, z: np.ndarray, cfg: NumericConfig | None = None):
    """Integral over each cell ``[z_i, z_{i+1}]`` plus the summed error estimate."""
    cfg = cfg or NumericConfig()
    try:
        F = _arr(f.primitive(z))
        with np.errstate(invalid="ignore"):
            cells = np.diff(F)
        if not np.any(np.isnan(cells)):
            return cells, 4e-16 * float(np.nansum(np.abs(cells))), True
    except NotImplementedError:
        pass
    cells = np.empty(z.size - 1)
    err = 0.0
    for i in range(z.size - 1):
        r = _adaptive(f, float(z[i]), float(z[i + 1]), cfg.quad_rel_tol)
        cells[i] = r.value
        err += r.error
    return cells, err, False


def sample(f: FuncExpr, g: Grid, cfg: NumericConfig | None = None, interp: Interp = "piecewise_linear") -> GridFunction:
    """Node values plus exact (where possible) cumulative integrals from node 0."""
    _check_inside(f, Interval(g.lo, g.hi))
    cells, _, _ = cell_integrals(f, g.nodes, cfg)
    prefix = np.concatenate([[0.0], np.cumsum(cells)])
    return GridFunction(g, _arr(f(g.nodes)), interp, prefix)


def default_grid(f: FuncExpr, I: Interval, m: int, cfg: NumericConfig | None = None) -> Grid:
    """Log grid toward a singular left end at 0, uniform otherwise; jumps become nodes."""
    cfg = cfg or NumericConfig()
    if I.lo == 0 and (f.singular_left or _touches_log_family(f)):
        g = log_grid(I, m, "left", cfg.t_max)
    else:
        g = uniform_grid(I, m)
    bps = np.unique(f.breakpoints())
    bps = bps[(bps > I.lo) & (bps < I.hi)]
    if bps.size:
        # jumps become nodes, flanked by symmetric pairs inside the neighbouring cells
        marks = np.concatenate([[I.lo], bps, [I.hi]])
        gap = np.minimum(np.diff(marks)[:-1], np.diff(marks)[1:])
        flank = [bps + s * gap for s in (-0.5, -0.25, 0.25, 0.5)]
        nodes = np.concatenate([g.nodes, bps, *flank])
        nodes = np.unique(nodes[(nodes >= g.lo) & (nodes <= g.hi) | np.isin(nodes, bps)])
        g = Grid(nodes, g.cluster_end)
    return g


def _touches_log_family(f: FuncExpr) -> bool:
    if isinstance(f, (NegLog, LogNegLog, NegLogPow, JumpEta)):
        return True
    for name in ("inner", "left", "right"):
        child = getattr(f, name, None)
        if isinstance(child, FuncExpr) and _touches_log_family(child):
            return True
    return False


def check_monotone_tag(f: FuncExpr, I: Interval | None = None, n: int = 257) -> bool:
    """Sampling check that the declared monotone tag is consistent with the values."""
    I = I or f.domain or Interval(0.0, 1.0)
    lo = I.lo if I.lo > 0 or not f.singular_left else I.hi * 1e-12
    xs = np.geomspace(lo, I.hi, n) if lo > 0 else np.linspace(lo, I.hi, n)
    v = _arr(f(xs))
    d = np.diff(v)
    tol = 1e-12 * np.maximum(1.0, np.abs(v[1:]))
    if f.monotone == "decreasing":
        return bool(np.all(d <= tol))
    if f.monotone == "increasing":
        return bool(np.all(d >= -tol))
    return True


def golden_section(fun, a: float, b: float, tol: float = 1e-12, maxiter: int = 200):
    """Maximise ``fun`` on ``[a, b]``; also checks both ends.  Returns ``(x, value)``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    best_x, best_v = a, fun(a)
    vb = fun(b)
    if vb > best_v:
        best_x, best_v = b, vb
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
        for x, v in ((c, fc), (d, fd)):
            if v > best_v:
                best_x, best_v = x, v
    return best_x, best_v


def _bisect_level(f: FuncExpr, c: np.ndarray, strict: bool, iters: int = 110):
    d = f.domain
    if d is None:
        raise ValueError("level points need a bounded domain")
    dec = f.monotone == "decreasing"
    log_space = d.lo == 0
    lo_u = math.log(1e-300) if log_space else d.lo
    hi_u = math.log(d.hi) if log_space else d.hi
    lo = np.full(c.shape, lo_u)
    hi = np.full(c.shape, hi_u)
    to_x = np.exp if log_space else (lambda u: u)

    def inside(u):
        v = _arr(f(to_x(u)))
        return v > c if strict else v >= c

    # dec: inside set is an initial segment; find its supremum.
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = inside(mid)
        if dec:
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        else:
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
    x = to_x(lo if dec else hi)
    if log_space:
        x = np.where(lo <= lo_u, 0.0, x) if dec else x
    all_in = inside(np.full(c.shape, hi_u if dec else lo_u))
    x = np.where(all_in, d.hi if dec else (d.lo if not log_space else 0.0), x)
    return x


# ---------------------------------------------------------------------------------
# text form
# ---------------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x)) if abs(x) < 1e15 else repr(float(x))


CATALOG = (
    "const:C",
    "neglog",
    "logneglog",
    "neglogpow(R)",
    "jump",
    "jump(a0,a1,...)",
    "step(x0,...,xn;v0,...,v_{n-1})",
    "pwl(x0,...,xn;v0,...,vn)",
    "trunc(F,K)",
    "resid(F,K)",
    "sum(F,G)",
    "scale(F,C)",
    "neg(F)",
    "expscale(F,MU[,SHIFT])",
    "pow(F,Q)",
)

_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[a-z_]+)|(?P<sym>[(),;:]))")


class ExprSyntaxError(ValueError):
    pass


def parse_expr(text: str) -> FuncExpr:
    """Parse the compact text form, e.g. ``trunc(logneglog, 2)``."""
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character at {pos}: {text[pos:]!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    parser = _Parser(tokens)
    expr = parser.expr()
    if parser.i != len(tokens):
        raise ExprSyntaxError(f"trailing input in {text!r}")
    return expr


@dataclass
class _Parser:
    tokens: list
    i: int = 0
    _names: dict = field(default_factory=dict)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ExprSyntaxError(f"expected {value or kind}, got {tok[1]!r}")
        self.i += 1
        return tok[1]

    def number(self) -> float:
        return float(self.take("num"))

    def numbers_until(self, stop: str) -> list[float]:
        out = [self.number()]
        while self.peek() == ("sym", ","):
            self.take("sym", ",")
            out.append(self.number())
        if self.peek()[1] != stop:
            raise ExprSyntaxError(f"expected {stop!r}")
        return out

    def expr(self) -> FuncExpr:
        name = self.take("name")
        if name == "const":
            if self.peek() == ("sym", ":"):
                self.take("sym", ":")
                return Const(self.number())
            self.take("sym", "(")
            c = self.number()
            self.take("sym", ")")
            return Const(c)
        if name == "neglog":
            return NegLog()
        if name == "logneglog":
            return LogNegLog()
        if name == "jump":
            if self.peek() == ("sym", "("):
                self.take("sym", "(")
                levels = self.numbers_until(")")
                self.take("sym", ")")
                return JumpEta(tuple(levels))
            return JumpEta.geom_double()
        if name in ("step", "pwl"):
            self.take("sym", "(")
            xs = self.numbers_until(";")
            self.take("sym", ";")
            vs = self.numbers_until(")")
            self.take("sym", ")")
            return step_function(xs, vs) if name == "step" else pwl_function(xs, vs)
        if name not in ("neglogpow", "neg", "sum", "expscale", "trunc", "resid", "scale", "pow"):
            raise ExprSyntaxError(f"unknown function {name!r}; catalog: {', '.join(CATALOG)}")
        self.take("sym", "(")
        if name == "neglogpow":
            r = self.number()
            self.take("sym", ")")
            return NegLogPow(int(r))
        inner = self.expr()
        if name == "neg":
            self.take("sym", ")")
            return Negate(inner)
        self.take("sym", ",")
        if name == "sum":
            other = self.expr()
            self.take("sym", ")")
            return Sum(inner, other)
        a = self.number()
        if name == "expscale":
            shift = 0.0
            if self.peek() == ("sym", ","):
                self.take("sym", ",")
                shift = self.number()
            self.take("sym", ")")
            return ExpScale(inner, a, shift)
        self.take("sym", ")")
        if name == "trunc":
            return Truncate(inner, a)
        if name == "resid":
            return TruncationResidual(inner, a)
        if name == "scale":
            return Scale(inner, a)
        return Power(inner, a)
