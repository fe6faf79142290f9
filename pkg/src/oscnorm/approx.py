"""Truncation sweeps, mollification, the decreasing rearrangement and the K(r) series."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import integrate as spi

from .domain import Grid, Interval, NumericConfig, uniform_grid
from .functions import FuncExpr, GridFunction, LogNegLog, TruncationResidual, _kinks, default_grid
from .oscillation import blo_seminorm, modulus

Shape = Literal["triangle", "cosine_bump"]


@dataclass(frozen=True)
class MollifierSpec:
    eps: float
    shape: Shape = "triangle"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.shape not in ("triangle", "cosine_bump"):
            raise ValueError(f"unknown mollifier shape {self.shape!r}")

    @property
    def C(self) -> float:
        # sup of the kernel is C / eps for both shapes
        return 1.0

    def kernel(self, y):
        y = np.asarray(y, dtype=float)
        e = self.eps
        inside = np.abs(y) < e
        if self.shape == "triangle":
            k = (e - np.abs(y)) / e**2
        else:
            k = (1.0 + np.cos(np.pi * y / e)) / (2.0 * e)
        return np.where(inside, k, 0.0)

    def cdf(self, y):
        """``int_{-eps}^{y} kernel``."""
        y = np.clip(np.asarray(y, dtype=float), -self.eps, self.eps)
        e = self.eps
        if self.shape == "triangle":
            return np.where(y <= 0, (e + y) ** 2 / (2 * e**2), 1.0 - (e - y) ** 2 / (2 * e**2))
        return (y + e) / (2 * e) + np.sin(np.pi * y / e) / (2 * np.pi)


@dataclass(frozen=True)
class SweepResult:
    params: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    witnesses: list = field(default_factory=list)
    bound_kind: Literal["upper", "lower", "none"] = "upper"

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise ValueError("sweep parameters must be strictly increasing")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "measured", np.asarray(self.measured, dtype=float))
        object.__setattr__(self, "bound", np.asarray(self.bound, dtype=float))

    def rows(self) -> list[tuple]:
        out = []
        for i, p in enumerate(self.params):
            w = self.witnesses[i] if i < len(self.witnesses) else None
            out.append((float(p), float(self.measured[i]), float(self.bound[i]),
                        math.nan if w is None else w.lo, math.nan if w is None else w.hi))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("param,measured,bound,witness_lo,witness_hi\n")
        for row in self.rows():
            buf.write(",".join(_g12(x) for x in row) + "\n")
        return buf.getvalue()


def _g12(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


# ---------------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------------


def _support_of_residual(f: FuncExpr, I0: Interval, k: float) -> Interval | None | str:
    """Sub-interval of ``I0`` where ``f - T_k f`` can be nonzero, for monotone ``f >= -k``.

    Returns ``None`` for an empty support and ``"full"`` when no reduction applies.
    """
    tag = f.monotone
    if tag is None or float(f.ess_inf(I0.lo, I0.hi)) < -k:
        return "full"
    x = float(f.level_point(k, strict=True))
    if tag == "decreasing":
        lo, hi = I0.lo, min(x, I0.hi)
    else:
        lo, hi = max(x, I0.lo), I0.hi
    return Interval(lo, hi) if hi > lo else None


def truncation_sweep(f: FuncExpr, I0: Interval, ks: Sequence[float], cfg: NumericConfig | None = None) -> SweepResult:
    """Rows ``(k, ||f - T_k f||_BLO(I0), bound)``.

    For monotone ``f`` the residual is supported on one end of ``I0`` and the
    seminorm is taken there (beyond that end the residual vanishes, which can
    only lower the oscillation).  The bound column is ``log(1 + e^{-k})`` for
    ``LogNegLog`` anchored at 0 and NaN otherwise.
    """
    cfg = cfg or NumericConfig()
    ks = np.asarray(ks, dtype=float)
    if np.any(ks <= 0):
        raise ValueError("truncation levels must be positive")
    measured, bound, wit = [], [], []
    for k in ks:
        resid = TruncationResidual(f, float(k))
        J = _support_of_residual(f, I0, k)
        if J is None:
            measured.append(0.0)
            wit.append(None)
        else:
            rep = blo_seminorm(resid, I0 if J == "full" else J, cfg)
            measured.append(rep.value)
            wit.append(rep.witness)
        if isinstance(f, LogNegLog) and I0.lo == 0:
            bound.append(math.log1p(math.exp(-k)))
        else:
            bound.append(math.nan)
    kind = "upper" if np.any(np.isfinite(bound)) else "none"
    return SweepResult(ks, measured, bound, wit, kind)


# ---------------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------------


def _inner_interval(f: FuncExpr, I0: Interval | None, eps: float) -> Interval:
    d = I0 or f.domain
    if d is None:
        raise ValueError("mollification needs a bounded domain")
    if 2 * eps >= d.length:
        raise ValueError(f"eps={eps} too large for ({d.lo}, {d.hi})")
    return Interval(d.lo + eps, d.hi - eps)


def _pc_cells(f: FuncExpr, lo: float, hi: float):
    bps = np.unique(np.asarray(f.breakpoints(), dtype=float))
    bps = bps[(bps > lo) & (bps < hi)]
    s = np.concatenate([[lo], bps])
    e = np.concatenate([bps, [hi]])
    return s, e, np.asarray(f(0.5 * (s + e)), dtype=float)


def mollify(f: FuncExpr, spec: MollifierSpec, g: Grid, cfg: NumericConfig | None = None) -> GridFunction:
    """``f_eps(x) = int kernel(y) f(x - y) dy`` at every node of ``g``.

    The grid must keep distance ``eps`` from the ends of the domain of ``f``.
    Piecewise constant ``f`` is handled exactly through kernel CDF overlaps.
    """
    cfg = cfg or NumericConfig()
    e = spec.eps
    d = f.domain
    if d is not None and (g.lo - e < d.lo - 1e-15 * max(1.0, abs(d.lo)) or g.hi + e > d.hi + 1e-15 * max(1.0, abs(d.hi))):
        raise ValueError(f"grid must stay eps={e} away from the ends of ({d.lo}, {d.hi})")
    x = g.nodes
    if f.is_constant:
        c = float(f(0.5 * (x[0] + x[-1])))
        return GridFunction(g, np.full(x.size, c))
    if f.piecewise_constant:
        s, t, v = _pc_cells(f, g.lo - e, g.hi + e)
        # contribution of cell [s, t): int_{x-t}^{x-s} kernel
        w = spec.cdf(x[:, None] - s[None, :]) - spec.cdf(x[:, None] - t[None, :])
        return GridFunction(g, w @ v)
    bps = _kinks(f)
    out = np.empty(x.size)
    for i, xi in enumerate(x):
        # kinks that nearly coincide would leave sub-intervals quad cannot resolve
        pts = np.unique(np.concatenate([[0.0], xi - bps[np.abs(xi - bps) < e * (1 - 1e-9)]]))
        pts = pts[np.concatenate([[True], np.diff(pts) > 1e-12 * e])]
        # absolute floor from the local size of f, for nodes where f_eps crosses zero
        scale = float(np.max(np.abs(f(xi - np.concatenate([[-e, e], pts])))))
        val, _ = spi.quad(lambda y: float(spec.kernel(y)) * float(f(xi - y)), -e, e,
                          points=pts, limit=200, epsabs=cfg.quad_rel_tol * scale * 1e-3,
                          epsrel=cfg.quad_rel_tol)
        out[i] = val
    return GridFunction(g, out)


def convolution_error(f: FuncExpr, I0: Interval, eps_ladder: Sequence[float], shape: Shape = "triangle",
                      cfg: NumericConfig | None = None, nodes: int = 257) -> SweepResult:
    """Rows ``(eps, max_nodes |f - f_eps|, 2 C W_{2 eps}(f))`` sorted by ``eps``."""
    cfg = cfg or NumericConfig()
    eps = np.sort(np.asarray(eps_ladder, dtype=float))
    measured, bound, wit = [], [], []
    for e in eps:
        spec = MollifierSpec(float(e), shape)
        J = _inner_interval(f, I0, e)
        g = uniform_grid(J, nodes)
        bps = _kinks(f)
        bps = bps[(bps > J.lo) & (bps < J.hi)]
        if bps.size:
            g = Grid(np.unique(np.concatenate([g.nodes, bps])))
        fe = mollify(f, spec, g, cfg)
        fx = np.asarray(f(g.nodes), dtype=float)
        fl = np.asarray(f.left_limit(g.nodes), dtype=float)
        diff = np.maximum(np.abs(fx - fe.values), np.abs(fl - fe.values))
        i = int(np.argmax(diff))
        measured.append(float(diff[i]))
        a = min(2.0 * e, I0.length)
        W, _ = modulus(f, I0, a, "lower", cfg)
        bound.append(2.0 * spec.C * W)
        wit.append(Interval(max(I0.lo, g.nodes[i] - e), min(I0.hi, g.nodes[i] + e)))
    return SweepResult(eps, measured, bound, wit, "upper")


# ---------------------------------------------------------------------------------
# rearrangement
# ---------------------------------------------------------------------------------


class _Distribution:
    """``lam -> |{x in I0 : |f(x)| >= lam}|``, exact for monotone or step ``f``."""

    def __init__(self, f: FuncExpr, I0: Interval, cfg: NumericConfig):
        self.f, self.I0 = f, I0
        self.exact = True
        if f.monotone is not None and not f.piecewise_constant:
            self.mode = "monotone"
        elif f.piecewise_constant or f.is_constant:
            self.mode = "cells"
            s, e, v = _pc_cells(f, I0.lo, I0.hi)
            self._set_cells(e - s, np.abs(v))
        else:
            self.mode = "cells"
            self.exact = False
            g = default_grid(f, I0, 8 * cfg.grid_size, cfg)
            x = g.nodes
            mids = 0.5 * (x[:-1] + x[1:])
            self._set_cells(np.diff(x), np.abs(np.asarray(f(mids), dtype=float)))

    def _set_cells(self, lengths, values):
        order = np.argsort(-values, kind="stable")
        self.vals = values[order]
        self.cum = np.cumsum(lengths[order])

    def _superlevel(self, lam, strict):
        f, I0 = self.f, self.I0
        x = np.asarray(f.level_point(lam, strict=strict), dtype=float)
        x = np.clip(x, I0.lo, I0.hi)
        return x - I0.lo if f.monotone == "decreasing" else I0.hi - x

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.mode == "cells":
            n = np.searchsorted(-self.vals, -lam, side="right")  # cells with |v| >= lam
            out = np.where(n > 0, self.cum[np.maximum(n, 1) - 1], 0.0)
        else:
            L = self.I0.length
            # {f >= lam} plus {f <= -lam} = complement of {f > -lam}
            # group L - (...) first: the lower tail is often exactly empty
            out = self._superlevel(lam, False) + (L - self._superlevel(-lam, True))
            out = np.minimum(out, L)
        return np.where(lam <= 0, self.I0.length, out)

    def rearranged(self, t: np.ndarray, iters: int = 200) -> np.ndarray:
        """``f*(t) = inf{lam : D(lam) <= t}``."""
        if self.mode == "cells":
            # D drops to cum[i] just above vals[i+1]; invert the step directly
            i = np.searchsorted(self.cum, t, side="right")
            return np.where(i < self.vals.size, self.vals[np.minimum(i, self.vals.size - 1)], 0.0)
        f, I0 = self.f, self.I0
        top = float(np.max(np.abs([f.ess_sup(I0.lo, I0.hi), f.ess_inf(I0.lo, I0.hi)])))
        lo = np.zeros_like(t)
        hi = np.full_like(t, top if math.isfinite(top) else 1.0)
        if not math.isfinite(top):
            for _ in range(2000):
                grow = (self(hi) > t) & np.isfinite(hi)
                if not np.any(grow):
                    break
                hi = np.where(grow, 2.0 * hi, hi)
                hi = np.where(hi > 1e300, np.inf, hi)
        for _ in range(iters):
            finite = np.isfinite(hi)
            mid = np.where(finite, 0.5 * (lo + hi), hi)
            ok = self(mid) <= t
            hi = np.where(ok & finite, mid, hi)
            lo = np.where(~ok & finite, mid, lo)
            if np.all(~finite | (hi - lo <= 4e-16 * np.maximum(np.abs(hi), 1e-300))):
                break
        # f*(0) is the essential sup; nothing is left at t = |I0|
        hi = np.where(t <= 0, top, hi)
        return np.where(t >= I0.length, 0.0, hi)


def distribution(f: FuncExpr, I0: Interval, lam, cfg: NumericConfig | None = None):
    return _Distribution(f, I0, cfg or NumericConfig())(lam)


def decreasing_rearrangement(f: FuncExpr, I0: Interval, g: Grid | None = None,
                             cfg: NumericConfig | None = None) -> GridFunction:
    """``f*`` on ``[0, |I0|]`` at the nodes of ``g`` (uniform with ``grid_size`` nodes by default)."""
    cfg = cfg or NumericConfig()
    g = g or uniform_grid(Interval(0.0, I0.length), cfg.grid_size)
    if g.lo < 0 or g.hi > I0.length * (1 + 1e-12):
        raise ValueError("rearrangement grid must lie in [0, |I0|]")
    D = _Distribution(f, I0, cfg)
    vals = D.rearranged(g.nodes.astype(float))
    vals = np.minimum.accumulate(vals)
    return GridFunction(g, vals, "piecewise_constant_left" if D.mode == "cells" else "piecewise_linear")


# ---------------------------------------------------------------------------------
# K(r)
# ---------------------------------------------------------------------------------


def k_of_r(r: float, terms: int = 40) -> tuple[float, float]:
    """``sum_{j>=1} exp(-(e^j - e - r j))``: partial sum and a geometric tail bound.

    Consecutive term ratios ``exp(-(e^{j+1} - e^j - r))`` decrease in ``j``; the
    sum is extended past ``terms`` until that ratio drops below 1/2.
    """
    if terms < 5:
        raise ValueError("terms must be at least 5")

    def log_term(j):
        return -(math.exp(j) - math.e - r * j)

    def log_ratio(j):
        return -(math.exp(j + 1) - math.exp(j) - r)

    n = terms
    while log_ratio(n + 1) > -math.log(2.0):
        n += 1
    logs = [log_term(j) for j in range(1, n + 1)]
    m = max(logs)
    value = math.exp(m) * math.fsum(math.exp(x - m) for x in logs)
    q = math.exp(log_ratio(n + 1))
    lt = log_term(n + 1)
    tail = math.exp(lt) / (1.0 - q) if lt > -745 else 0.0
    return value, tail
