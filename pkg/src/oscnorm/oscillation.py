"""Mean and lower oscillation, BMO/BLO seminorm search, vanishing moduli.

The search scores every interval whose endpoints are scan nodes (grid nodes,
plus the ambient left end when the grid starts at a cutoff), using prefix
integrals for O(1) averages and running minima of per-cell infima.  The infimum
for a node pair is *limit-closed*: it also includes the one-sided values just
outside the pair, which is the supremum over intervals ``[z_j - d, z_k + d]``
as ``d -> 0`` and captures witnesses that straddle a jump.  The best pairs are
then polished by golden-section search on each endpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np
from scipy import optimize

from .domain import Grid, Interval, NumericConfig, refine
from .functions import (
    FuncExpr,
    Sampled,
    _adaptive,
    average,
    default_grid,
    golden_section,
    infimum,
)

Mode = Literal["lower", "mean", "a1"]
Kind = Literal["bmo", "blo"]

_TIE = 1e-12
_TOP_ROWS = 4
_MEAN_CELL_MODEL_NODES = 257


@dataclass(frozen=True)
class OscReport:
    value: float
    witness: Interval
    kind: str
    levels: list
    converged: bool
    left_anchored_value: float | None = None
    exact: bool = True
    ambient: Interval | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "witness": self.witness.as_list(),
            "kind": self.kind,
            "levels": [[int(m), float(v)] for m, v in self.levels],
            "converged": self.converged,
            "left_anchored_value": self.left_anchored_value,
            "exact": self.exact,
            "ambient": None if self.ambient is None else self.ambient.as_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class SearchResult:
    value: float
    witness: Interval
    levels: list
    converged: bool
    left_anchored_value: float | None
    exact: bool


# ---------------------------------------------------------------------------------
# single intervals
# ---------------------------------------------------------------------------------


def _integral(f: FuncExpr, x: float, y: float, cfg: NumericConfig) -> float:
    if f.piecewise_constant and f._step_table is not None:
        starts, values, _ = f._step_table
        ends = np.append(starts[1:], f.domain.hi)
        return float(np.sum(values * (np.clip(ends, x, y) - np.clip(starts, x, y))))
    # primitive differences cancel badly on relatively short intervals
    if y - x > 1e-3 * max(abs(x), abs(y)):
        try:
            F = f.primitive(np.array([x, y]))
            v = float(F[1] - F[0])
            if not math.isnan(v):
                return v
        except NotImplementedError:
            pass
    return _adaptive(f, x, y, cfg.quad_rel_tol).value


def _positive_part_integral(f: FuncExpr, I: Interval, c: float, cfg: NumericConfig) -> float:
    """``integral_I (f - c)_+`` with sign changes located exactly where possible."""
    lo, hi = I.lo, I.hi
    if f.monotone is not None and not f.is_constant:
        try:
            xc = float(np.clip(f.level_point(c), lo, hi))
            if f.monotone == "decreasing":
                return _integral(f, lo, xc, cfg) - c * (xc - lo) if xc > lo else 0.0
            return _integral(f, xc, hi, cfg) - c * (hi - xc) if xc < hi else 0.0
        except NotImplementedError:
            pass
    if f.piecewise_constant and f._step_table is not None:
        starts, values, _ = f._step_table
        ends = np.append(starts[1:], f.domain.hi)
        a = np.clip(starts, lo, hi)
        b = np.clip(ends, lo, hi)
        return float(np.sum((b - a) * np.maximum(values - c, 0.0)))
    # generic: sample, bracket sign changes, polish with brentq
    xs = np.linspace(lo, hi, 513)
    if lo == 0 and f.singular_left:
        xs = np.concatenate([[0.0], np.geomspace(hi * 1e-15, hi, 512)])
    g = lambda t: float(f(t)) - c
    vals = np.array([g(t) if t > 0 or not f.singular_left else np.inf for t in xs])
    cuts = [lo]
    for i in range(xs.size - 1):
        if np.sign(vals[i]) * np.sign(vals[i + 1]) < 0 and np.isfinite(vals[i]):
            cuts.append(optimize.brentq(g, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15))
        elif np.sign(vals[i]) * np.sign(vals[i + 1]) < 0:
            cuts.append(optimize.brentq(g, xs[i + 1] * 1e-300 + 1e-300, xs[i + 1]))
    for bp in f.breakpoints():
        if lo < bp < hi:
            cuts.append(float(bp))
    cuts.append(hi)
    cuts = sorted(set(cuts))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        if float(f(mid)) > c:
            total += _integral(f, a, b, cfg) - c * (b - a)
    return max(total, 0.0)


def mean_oscillation(f: FuncExpr, I: Interval, cfg: NumericConfig | None = None) -> float:
    """``avg_I |f - f_I|`` computed as ``2/|I| * integral_I (f - f_I)_+``."""
    cfg = cfg or NumericConfig()
    if f.is_constant:
        return 0.0
    c = average(f, I, cfg)
    if not math.isfinite(c):
        return math.inf
    return 2.0 * _positive_part_integral(f, I, c, cfg) / I.length


def lower_oscillation(f: FuncExpr, I: Interval, cfg: NumericConfig | None = None) -> float:
    """``f_I - inf_I f``."""
    cfg = cfg or NumericConfig()
    if f.is_constant:
        return 0.0
    return average(f, I, cfg) - infimum(f, I)


# ---------------------------------------------------------------------------------
# scan engine
# ---------------------------------------------------------------------------------


@dataclass
class _ScanData:
    z: np.ndarray
    F: np.ndarray
    cell_inf: np.ndarray
    right_ext: np.ndarray  # value just right of z_k (inf at the ambient right end)
    left_ext: np.ndarray  # value just left of z_j (inf at the ambient left end)
    exact: bool
    cell_values: np.ndarray | None = None  # piecewise-constant cell values for mean mode
    mean_kind: str = ""
    unique_values: np.ndarray | None = None
    value_prefix: np.ndarray | None = None


def _scan_nodes(grid: Grid, I0: Interval) -> np.ndarray:
    z = grid.nodes
    z = z[(z >= I0.lo) & (z <= I0.hi)]
    if z.size == 0 or z[0] > I0.lo:
        z = np.concatenate([[I0.lo], z])
    if z[-1] < I0.hi:
        z = np.concatenate([z, [I0.hi]])
    return z


def _prefix(f: FuncExpr, z: np.ndarray, cfg: NumericConfig) -> tuple[np.ndarray, bool]:
    try:
        F = np.asarray(f.primitive(z), dtype=float)
        if not np.any(np.isnan(F)):
            return F, True
    except NotImplementedError:
        pass
    cells = np.array([_adaptive(f, z[i], z[i + 1], cfg.quad_rel_tol).value for i in range(z.size - 1)])
    return np.concatenate([[0.0], np.cumsum(cells)]), False


def _prepare(f: FuncExpr, z: np.ndarray, I0: Interval, cfg: NumericConfig) -> _ScanData:
    F, exact = _prefix(f, z, cfg)
    cell_inf = np.asarray(f.ess_inf(z[:-1], z[1:]), dtype=float)
    inner = z[1:-1]
    right_ext = np.full(z.size, np.inf)
    left_ext = np.full(z.size, np.inf)
    if inner.size:
        right_ext[1:-1] = np.asarray(f(inner), dtype=float)
        left_ext[1:-1] = np.asarray(f.left_limit(inner), dtype=float)
    cell_values = None
    if f.piecewise_constant:
        mids = 0.5 * (z[:-1] + z[1:])
        cell_values = np.asarray(f(mids), dtype=float)
    return _ScanData(z, F, cell_inf, right_ext, left_ext, exact and f.inf_is_exact, cell_values)


def _row_scores(f: FuncExpr, d: _ScanData, j: int, mode: Mode, max_len: float | None):
    z, F = d.z, d.F
    L = z[j + 1 :] - z[j]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        avg = (F[j + 1 :] - F[j]) / L
        if mode == "mean":
            s = _row_mean(f, d, j, avg)
        else:
            inf = np.minimum.accumulate(d.cell_inf[j:])
            inf = np.minimum(inf, d.right_ext[j + 1 :])
            inf = np.minimum(inf, d.left_ext[j])
            if mode == "lower":
                s = avg - inf
            else:
                if np.any(inf <= 0):
                    raise ValueError(f"weight {f.to_text()} is not positive on the search interval")
                s = avg / inf
    s = np.where(np.isnan(s), np.inf, s)
    if max_len is not None:
        s = np.where(L <= max_len * (1 + 1e-12), s, -np.inf)
    return s


def _row_mean(f: FuncExpr, d: _ScanData, j: int, avg: np.ndarray) -> np.ndarray:
    z, F = d.z, d.F
    zj, zk = z[j], z[j + 1 :]
    L = zk - zj
    c = np.where(np.isfinite(avg), avg, 0.0)
    if d.mean_kind == "monotone":
        xc = np.clip(np.asarray(f.level_point(c), dtype=float), zj, zk)
        Fx = np.asarray(f.primitive(xc), dtype=float)
        if f.monotone == "decreasing":
            pos = np.where(xc > zj, Fx - F[j] - c * (xc - zj), 0.0)
        else:
            pos = np.where(xc < zk, F[j + 1 :] - Fx - c * (zk - xc), 0.0)
    else:
        P, U = d.value_prefix, d.unique_values
        lens = P[:, j + 1 :] - P[:, j : j + 1]
        pos = np.sum(np.maximum(U[:, None] - c[None, :], 0.0) * lens, axis=0)
    out = 2.0 * np.maximum(pos, 0.0) / L
    return np.where(np.isfinite(avg), out, np.inf)


def _setup_mean(f: FuncExpr, d: _ScanData):
    mono_ok = False
    if f.monotone is not None and not f.is_constant:
        try:
            f.primitive(d.z[:2])
            f.level_point(0.0)
            mono_ok = True
        except NotImplementedError:
            mono_ok = False
    if mono_ok and d.exact:
        d.mean_kind = "monotone"
        return
    if d.cell_values is not None:
        v = d.cell_values
    else:
        with np.errstate(invalid="ignore"):
            v = np.diff(d.F) / np.diff(d.z)
        d.exact = False
    h = np.diff(d.z)
    U = np.unique(v)
    H = (v[None, :] == U[:, None]) * h[None, :]
    d.unique_values = U
    d.value_prefix = np.concatenate([np.zeros((U.size, 1)), np.cumsum(H, axis=1)], axis=1)
    d.mean_kind = "cells"


def _scan(f, d: _ScanData, mode: Mode, max_len):
    """Return (best value, j, k, row bests, left-anchored value)."""
    m = d.z.size
    best, bj, bk = -np.inf, 0, 1
    rows = []
    anchored = None
    for j in range(m - 1):
        s = _row_scores(f, d, j, mode, max_len)
        rmax = float(np.max(s))
        if rmax == -np.inf:
            continue
        k = j + 1 + int(np.argmax(s >= rmax - _TIE * max(1.0, abs(rmax)) if math.isfinite(rmax) else s == rmax))
        rows.append((rmax, j, k))
        if j == 0:
            anchored = rmax
        if rmax > best + _TIE * max(1.0, abs(best) if math.isfinite(best) else 1.0):
            best, bj, bk = rmax, j, k
    return best, bj, bk, rows, anchored


def _pair_score(f: FuncExpr, x: float, y: float, mode: Mode, I0: Interval, cfg: NumericConfig) -> float:
    if not y > x:
        return -math.inf
    L = y - x
    try:
        avg = _integral(f, x, y, cfg) / L
    except Exception:
        return -math.inf
    if mode == "mean":
        if not math.isfinite(avg):
            return math.inf
        return 2.0 * _positive_part_integral(f, Interval(x, y), avg, cfg) / L
    inf = float(f.ess_inf(x, y))
    if y < I0.hi:
        inf = min(inf, float(f(y)))
    if x > I0.lo:
        inf = min(inf, float(f.left_limit(x)))
    if mode == "lower":
        return avg - inf
    if inf <= 0:
        raise ValueError(f"weight {f.to_text()} is not positive on the search interval")
    return avg / inf


def _polish(f, d: _ScanData, j: int, k: int, mode: Mode, I0, cfg, max_len, rounds: int = 40):
    z = d.z
    x, y = float(z[j]), float(z[k])
    best = _pair_score(f, x, y, mode, I0, cfg)
    # brackets reach the neighbouring nodes but never shrink the pair below half its length
    half = 0.5 * (x + y)
    xlo, xhi = float(z[max(j - 1, 0)]), min(float(z[j + 1]), half)
    ylo, yhi = max(float(z[k - 1]), half), float(z[min(k + 1, z.size - 1)])
    if not math.isfinite(best):
        return best, x, y
    for _ in range(rounds):
        improved = False
        # left endpoint
        lo_b = max(xlo, y - max_len) if max_len else xlo
        hi_b = min(xhi, y - 1e-15 * max(abs(y), 1e-300))
        if hi_b > lo_b:
            tol = 1e-13 * max(hi_b - lo_b, 1e-300)
            nx, nv = golden_section(lambda t: _pair_score(f, t, y, mode, I0, cfg), lo_b, hi_b, tol=tol)
            if nv > best + _TIE * max(1.0, abs(best)):
                best, x, improved = nv, nx, True
        lo_b = max(ylo, x + 1e-15 * max(abs(x), 1e-300))
        hi_b = min(yhi, x + max_len) if max_len else yhi
        if hi_b > lo_b:
            tol = 1e-13 * max(hi_b - lo_b, 1e-300)
            ny, nv = golden_section(lambda t: _pair_score(f, x, t, mode, I0, cfg), lo_b, hi_b, tol=tol)
            if nv > best + _TIE * max(1.0, abs(best)):
                best, y, improved = nv, ny, True
        if not improved:
            break
    return best, x, y


def _better(v, x, y, best) -> bool:
    """Strictly larger beyond tolerance, or tied with a smaller left end / shorter length."""
    bv, bx, by = best
    if bv == -np.inf:
        return True
    tol = _TIE * max(1.0, abs(bv) if math.isfinite(bv) else 1.0)
    if v > bv + tol:
        return True
    if abs(v - bv) <= tol or (v == bv):
        return (x, y - x) < (bx, by - bx)
    return False


def search(
    f: FuncExpr,
    I0: Interval,
    mode: Mode,
    cfg: NumericConfig | None = None,
    grid: Grid | None = None,
    max_len: float | None = None,
) -> SearchResult:
    """Supremum of the chosen interval score over subintervals of ``I0``."""
    cfg = cfg or NumericConfig()
    d0 = f.domain
    if d0 is not None and not d0.contains(I0):
        raise ValueError(f"interval ({I0.lo}, {I0.hi}) is outside the domain of {f.to_text()}")
    if f.is_constant and mode != "a1":
        return SearchResult(0.0, I0, [(cfg.grid_size, 0.0)] * cfg.refine_levels, True, 0.0, True)
    g = grid or default_grid(f, I0, cfg.grid_size, cfg)
    nonsmooth_mean = mode == "mean" and f.monotone is None and not f.piecewise_constant
    if nonsmooth_mean and len(g) > _MEAN_CELL_MODEL_NODES:
        g = default_grid(f, I0, _MEAN_CELL_MODEL_NODES, cfg)
    levels = []
    est = -np.inf
    exact = True
    anchored = None
    last = None
    for level in range(cfg.refine_levels):
        z = _scan_nodes(g, I0)
        d = _prepare(f, z, I0, cfg)
        if mode == "mean":
            _setup_mean(f, d)
        val, j, k, rows, anch = _scan(f, d, mode, max_len)
        exact = exact and d.exact
        est = max(est, val)
        anchored = anch if anchored is None else max(anchored, anch if anch is not None else -np.inf)
        levels.append((int(z.size), float(est)))
        last = (d, rows)
        if level + 1 < cfg.refine_levels:
            if nonsmooth_mean and 2 * len(g) - 1 > 4 * _MEAN_CELL_MODEL_NODES:
                break
            g = refine(g)
    d, rows = last
    # polish the best few rows
    rows.sort(key=lambda r: (-r[0], r[1], r[2]))
    cand = []
    seen = set()
    for v, j, k in rows:
        if len(cand) >= _TOP_ROWS:
            break
        if (j, k) in seen:
            continue
        seen.add((j, k))
        cand.append((v, j, k))
    best = (-np.inf, I0.lo, I0.hi)
    for v, j, k in cand:
        scan_v = v
        pv, px, py = _polish(f, d, j, k, mode, I0, cfg, max_len)
        if pv > scan_v + _TIE * max(1.0, abs(scan_v) if math.isfinite(scan_v) else 1.0):
            v, x, y = pv, px, py
        else:
            v, x, y = scan_v, float(d.z[j]), float(d.z[k])
        if _better(v, x, y, best):
            best = (v, x, y)
    value = max(float(best[0]), float(est))
    if value > best[0] + _TIE * max(1.0, abs(best[0]) if math.isfinite(best[0]) else 1.0):
        best = (value, best[1], best[2])
    if len(levels) >= 2:
        a, b = levels[-2][1], levels[-1][1]
        converged = bool(math.isfinite(b) and abs(b - a) <= cfg.stability_ratio * abs(b) + 1e-12)
    else:
        converged = bool(math.isfinite(levels[-1][1]))
    lefta = None
    if f.monotone == "decreasing" and anchored is not None and mode != "mean":
        lefta = float(anchored)
    witness = Interval(best[1], best[2]) if best[2] > best[1] else I0
    return SearchResult(float(value), witness, levels, converged, lefta, exact)


def _report(res: SearchResult, kind: str, I0: Interval) -> OscReport:
    return OscReport(res.value, res.witness, kind, res.levels, res.converged, res.left_anchored_value, res.exact, I0)


def blo_seminorm(f: FuncExpr, I0: Interval, cfg: NumericConfig | None = None, grid: Grid | None = None) -> OscReport:
    """``sup_I (f_I - inf_I f)`` over subintervals of ``I0``."""
    return _report(search(f, I0, "lower", cfg, grid), "blo", I0)


def bmo_seminorm(f: FuncExpr, I0: Interval, cfg: NumericConfig | None = None, grid: Grid | None = None) -> OscReport:
    """``sup_I avg_I |f - f_I|`` over subintervals of ``I0``."""
    return _report(search(f, I0, "mean", cfg, grid), "bmo", I0)


def anchored_agrees(report: OscReport, cfg: NumericConfig | None = None) -> bool:
    """For decreasing inputs: full search equals the left-anchored search within tau."""
    cfg = cfg or NumericConfig()
    if report.left_anchored_value is None:
        return True
    a, b = report.left_anchored_value, report.value
    return abs(b - a) <= cfg.stability_ratio * max(abs(b), 1e-300) + 1e-12


# ---------------------------------------------------------------------------------
# vanishing moduli
# ---------------------------------------------------------------------------------


def modulus(f: FuncExpr, I0: Interval, a: float, kind: Literal["lower", "mean"] = "lower",
            cfg: NumericConfig | None = None) -> tuple[float, Interval]:
    """Supremum of the oscillation over subintervals of ``I0`` with length at most ``a``.

    Node pairs within the length cap are scanned, plus sliding windows of length
    ``a, a/2, a/4, a/8`` anchored at every node so short caps are never starved
    of candidates on coarse grids.
    """
    cfg = cfg or NumericConfig()
    if not 0 < a <= I0.length * (1 + 1e-12):
        raise ValueError("need 0 < a <= |I0|")
    a = min(a, I0.length)
    if f.is_constant:
        return 0.0, Interval(I0.lo, I0.lo + a)
    res = search(f, I0, kind, cfg.with_overrides(refine_levels=1), max_len=a)
    best_v, best_I = res.value, res.witness
    g = default_grid(f, I0, cfg.grid_size, cfg)
    z = _scan_nodes(g, I0)
    for frac in (1.0, 0.5, 0.25, 0.125):
        L = a * frac
        starts = np.concatenate([z, z - L])
        starts = np.unique(starts[(starts >= I0.lo) & (starts + L <= I0.hi * (1 + 1e-15))])
        if starts.size == 0:
            starts = np.array([I0.lo])
        ends = np.minimum(starts + L, I0.hi)
        # windows below the float spacing at their start collapse to a point
        ok = ends > starts
        if not np.any(ok):
            continue
        starts, ends = starts[ok], ends[ok]
        vals = _window_scores(f, starts, ends, kind, I0, cfg)
        i = int(np.argmax(vals))
        if best_v == -math.inf or vals[i] > best_v + _TIE * max(1.0, abs(best_v)):
            best_v, best_I = float(vals[i]), Interval(starts[i], ends[i])
    return float(best_v), best_I


def _window_scores(f, starts, ends, kind, I0, cfg):
    try:
        F = np.asarray(f.primitive(np.concatenate([starts, ends])), dtype=float)
        ints = F[starts.size :] - F[: starts.size]
        if np.any(np.isnan(ints)):
            raise NotImplementedError
        short = (ends - starts) <= 1e-3 * np.maximum(np.abs(starts), np.abs(ends))
        for i in np.flatnonzero(short):
            ints[i] = _integral(f, starts[i], ends[i], cfg)
    except NotImplementedError:
        ints = np.array([_integral(f, s, e, cfg) for s, e in zip(starts, ends)])
    L = ends - starts
    avg = ints / L
    if kind == "mean":
        return np.array(
            [2.0 * _positive_part_integral(f, Interval(s, e), c, cfg) / (e - s) if math.isfinite(c) else np.inf
             for s, e, c in zip(starts, ends, avg)]
        )
    inf = np.asarray(f.ess_inf(starts, ends), dtype=float)
    inner_r = ends < I0.hi
    inner_l = starts > I0.lo
    if np.any(inner_r):
        inf[inner_r] = np.minimum(inf[inner_r], np.asarray(f(ends[inner_r]), dtype=float))
    if np.any(inner_l):
        inf[inner_l] = np.minimum(inf[inner_l], np.asarray(f.left_limit(starts[inner_l]), dtype=float))
    with np.errstate(invalid="ignore"):
        out = avg - inf
    return np.where(np.isnan(out), np.inf, out)


def w_modulus(f: FuncExpr, I0: Interval, a: float, cfg: NumericConfig | None = None) -> float:
    """``W_a(f)``: lower oscillation over intervals of length at most ``a``."""
    return modulus(f, I0, a, "lower", cfg)[0]


def vanishing_profile(f: FuncExpr, I0: Interval, kind: Literal["mean", "lower"],
                      a_ladder: Sequence[float], cfg: NumericConfig | None = None) -> np.ndarray:
    """Rows ``(a, modulus_a)`` for a decreasing ladder of caps."""
    a_ladder = np.asarray(a_ladder, dtype=float)
    if a_ladder.ndim != 1 or a_ladder.size == 0 or np.any(a_ladder <= 0) or np.any(np.diff(a_ladder) >= 0):
        raise ValueError("a_ladder must be positive and strictly decreasing")
    rows = [(a, modulus(f, I0, a, kind, cfg)[0]) for a in a_ladder]
    return np.array(rows)


# ---------------------------------------------------------------------------------
# independent oracle for step functions
# ---------------------------------------------------------------------------------

MAX_ORACLE_BREAKPOINTS = 12


def _step_data(step) -> tuple[list[float], list[float]]:
    if isinstance(step, Sampled):
        if not step.piecewise_constant:
            raise ValueError("oracle needs a piecewise-constant function")
        x = step.data.grid.nodes
        v = step.data.values[:-1]
        keep = np.concatenate([[True], np.diff(v) != 0])
        breaks = list(x[:-1][keep]) + [x[-1]]
        return [float(b) for b in breaks], [float(t) for t in v[keep]]
    breaks, values = step
    return [float(b) for b in breaks], [float(v) for v in values]


def brute_force_oracle(step, kind: Literal["bmo", "blo", "a1"]) -> float:
    """Exact supremum for a step function given as ``Sampled`` or ``(breaks, values)``.

    ``blo``/``a1`` are exact rational maxima over breakpoint pairs with the
    neighbouring cells folded into the infimum (the one-sided limits).  ``bmo``
    maximises ``2N/L^2`` on every cell pair, where for a fixed superlevel set
    ``N`` is bilinear in the endpoints; corners, edge and interior stationary
    points are all evaluated with the true mean oscillation.
    """
    p, v = _step_data(step)
    if len(p) - 2 > MAX_ORACLE_BREAKPOINTS:
        raise ValueError(f"oracle supports at most {MAX_ORACLE_BREAKPOINTS} breakpoints")
    if len(v) != len(p) - 1:
        raise ValueError("need len(values) == len(breaks) - 1")
    if kind in ("blo", "a1"):
        return float(_oracle_lower(p, v, kind))
    if kind == "bmo":
        return _oracle_mean(p, v)
    raise ValueError(f"unknown kind {kind!r}")


def _oracle_lower(p, v, kind):
    P = [Fraction(t) for t in p]
    V = [Fraction(t) for t in v]
    n = len(V)
    if kind == "a1" and min(V) <= 0:
        raise ValueError("A1 oracle needs a positive step function")
    best = None
    for i in range(n):
        acc = Fraction(0)
        for j in range(i + 1, n + 1):
            acc += V[j - 1] * (P[j] - P[j - 1])
            avg = acc / (P[j] - P[i])
            lo = max(i - 1, 0)
            hi = min(j, n - 1)
            m = min(V[lo : hi + 1])
            s = avg - m if kind == "blo" else avg / m
            if best is None or s > best:
                best = s
    return best


def _mo_step(p, v, x, y):
    if not y > x:
        return 0.0
    a = np.clip(np.asarray(p[:-1]), x, y)
    b = np.clip(np.asarray(p[1:]), x, y)
    lens = b - a
    vv = np.asarray(v)
    L = y - x
    c = float(np.sum(lens * vv)) / L
    return 2.0 * float(np.sum(lens * np.maximum(vv - c, 0.0))) / L


def _oracle_mean(p, v):
    n = len(v)
    best = 0.0
    thresholds = sorted(set(v))
    for a in range(n):
        for b in range(a + 1, n):
            xa, xb = p[a], p[a + 1]
            ya, yb = p[b], p[b + 1]
            cands = {(xa, ya), (xa, yb), (xb, ya), (xb, yb)}
            for t in [-math.inf] + thresholds:
                sigma = [i for i in range(a, b + 1) if v[i] > t]
                if not sigma:
                    continue
                coef = _bilinear(p, v, a, b, sigma)
                cands.update(_stationary(coef, (xa, xb), (ya, yb)))
            for x, y in cands:
                if xa <= x <= xb and ya <= y <= yb and y > x:
                    best = max(best, _mo_step(p, v, x, y))
    return best


def _bilinear(p, v, a, b, sigma):
    """Coefficients ``(n0, nx, ny, nxy)`` of ``N = A*L - T*S`` on cell pair ``(a, b)``."""
    # affine pieces: len_a = p[a+1] - x, len_b = y - p[b], middle cells fixed
    mid = range(a + 1, b)
    Tm = sum(v[i] * (p[i + 1] - p[i]) for i in mid)
    Am = sum(v[i] * (p[i + 1] - p[i]) for i in mid if i in sigma)
    Sm = sum(p[i + 1] - p[i] for i in mid if i in sigma)
    sa, sb = a in sigma, b in sigma
    # each quantity as (const, coef_x, coef_y)
    T = (Tm + v[a] * p[a + 1] - v[b] * p[b], -v[a], v[b])
    A = (Am + (v[a] * p[a + 1] if sa else 0) - (v[b] * p[b] if sb else 0), -v[a] if sa else 0, v[b] if sb else 0)
    S = (Sm + (p[a + 1] if sa else 0) - (p[b] if sb else 0), -1 if sa else 0, 1 if sb else 0)
    L = (0.0, -1.0, 1.0)

    def mul(u, w):
        return (
            u[0] * w[0],
            u[0] * w[1] + u[1] * w[0],
            u[0] * w[2] + u[2] * w[0],
            u[1] * w[2] + u[2] * w[1],
            u[1] * w[1],
            u[2] * w[2],
        )

    AL, TS = mul(A, L), mul(T, S)
    return tuple(s - t for s, t in zip(AL, TS))[:4]


def _stationary(coef, xr, yr):
    n0, nx, ny, nxy = coef
    out = []
    # edges: x fixed -> y* = -(2 alpha + beta x0)/beta with N = alpha + beta y
    for x0 in xr:
        alpha, beta = n0 + nx * x0, ny + nxy * x0
        if beta != 0:
            out.append((x0, -(2 * alpha + beta * x0) / beta))
    for y0 in yr:
        gamma, delta = n0 + ny * y0, nx + nxy * y0
        if delta != 0:
            out.append((-(2 * gamma + delta * y0) / delta, y0))
    # interior: N_x = -N_y gives x + y = s; then N_y (y - x) = 2N is quadratic in x
    if nxy != 0:
        s = -(nx + ny) / nxy
        # substituting y = s - x into N_y (y - x) = 2N leaves a linear equation
        q1 = -(nxy * s + 2 * nx)
        q0 = -(ny * s + 2 * n0)
        roots = [-q0 / q1] if q1 != 0 else []
        for x in roots:
            out.append((x, s - x))
    return out


# ---------------------------------------------------------------------------------
# John-Nirenberg style decay of level sets
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    lambdas: np.ndarray
    measures: np.ndarray
    slope: float
    intercept: float
    r2: float
    bound: np.ndarray = field(repr=False)

    @property
    def decays(self) -> bool:
        return self.slope < 0


def level_set_measure(f: FuncExpr, I: Interval, c: float, lam: float, cfg: NumericConfig | None = None) -> float:
    """``|{x in I: |f(x) - c| > lam}|``."""
    cfg = cfg or NumericConfig()
    if f.monotone is not None and not f.is_constant:
        hi_pt = float(np.clip(f.level_point(c + lam, strict=True), I.lo, I.hi))
        lo_pt = float(np.clip(f.level_point(c - lam), I.lo, I.hi))
        if f.monotone == "decreasing":
            return (hi_pt - I.lo) + (I.hi - lo_pt)
        return (I.hi - hi_pt) + (lo_pt - I.lo)
    xs = np.linspace(I.lo, I.hi, 20001)
    mids = 0.5 * (xs[:-1] + xs[1:])
    return float(np.sum(np.abs(np.asarray(f(mids)) - c) > lam) * (xs[1] - xs[0]))


def john_nirenberg_decay(f: FuncExpr, I: Interval, lambdas: Sequence[float] | None = None,
                         cfg: NumericConfig | None = None) -> DecayFit:
    """Least-squares fit of ``log |{|f - f_I| > lam}|`` against ``lam``.

    The default ladder is ``lam = bmo * linspace(1, 6, 15)``, measured in units of
    the seminorm so the fit sees the tail rather than the bulk.
    """
    cfg = cfg or NumericConfig()
    c = average(f, I, cfg)
    bmo = bmo_seminorm(f, I, cfg).value
    if lambdas is None:
        if not bmo > 0 or not math.isfinite(bmo):
            raise ValueError("default ladder needs a positive finite seminorm")
        lambdas = bmo * np.linspace(1.0, 6.0, 15)
    lambdas = np.asarray(lambdas, dtype=float)
    meas = np.array([level_set_measure(f, I, c, lam, cfg) for lam in lambdas])
    keep = meas > 0
    if keep.sum() < 3:
        raise ValueError("level sets vanish too early for a decay fit")
    lam, y = lambdas[keep], np.log(meas[keep])
    slope, intercept = np.polyfit(lam, y, 1)
    resid = y - (slope * lam + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    bound = cfg.jn_c1 * np.exp(-cfg.jn_c2 * lambdas / bmo) * I.length if bmo > 0 else np.zeros_like(lambdas)
    return DecayFit(lambdas, meas, float(slope), float(intercept), r2, bound)
