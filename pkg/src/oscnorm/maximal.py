"""Discrete Hardy-Littlewood maximal operator localised to an ambient interval."""

from __future__ import annotations

from typing import Literal

import numpy as np

from .domain import Grid, Interval, NumericConfig
from .functions import FuncExpr, GridFunction, Sampled
from .oscillation import _prefix, _scan_nodes


def _as_expr(w: FuncExpr | GridFunction) -> FuncExpr:
    if isinstance(w, GridFunction):
        if np.any(w.values < 0):
            w = GridFunction(w.grid, np.abs(w.values), w.interp)
        return Sampled(w)
    return w


def _check_nonnegative(w: FuncExpr, z: np.ndarray):
    inner = z[1:-1] if z.size > 2 else z
    probe = np.concatenate([np.asarray(w(inner), dtype=float), np.asarray(w.ess_inf(z[:-1], z[1:]), dtype=float)])
    if np.any(probe < 0):
        raise ValueError(f"{w.to_text()} takes negative values; pass its absolute value")


def pair_averages(F: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``A[j, k] = (F_k - F_j)/(z_k - z_j)`` for ``j < k``, ``-inf`` elsewhere."""
    with np.errstate(invalid="ignore", divide="ignore"):
        A = (F[None, :] - F[:, None]) / (z[None, :] - z[:, None])
    A[np.tril_indices(z.size)] = -np.inf
    return np.where(np.isnan(A), np.inf, A)


def _fast(A: np.ndarray) -> np.ndarray:
    # S[j, i] = max_{k >= i} A[j, k]; then max over j <= i of S[j, i]
    S = np.maximum.accumulate(A[:, ::-1], axis=1)[:, ::-1]
    m = A.shape[0]
    S[np.tril_indices(m, k=-1)] = -np.inf  # rows j > column i
    C = np.maximum.accumulate(S, axis=0)
    return np.diagonal(C).copy()


def _exact(A: np.ndarray) -> np.ndarray:
    m = A.shape[0]
    out = np.empty(m)
    for i in range(m):
        out[i] = np.max(A[: i + 1, i:])
    return out


def maximal_values(w: FuncExpr, z: np.ndarray, I0: Interval, cfg: NumericConfig,
                   mode: Literal["fast", "exact"] = "fast") -> np.ndarray:
    """``Mw`` at every scan node ``z`` (which must start at ``I0.lo`` and end at ``I0.hi``)."""
    F, _ = _prefix(w, z, cfg)
    A = pair_averages(F, z)
    M = _fast(A) if mode == "fast" else _exact(A)
    # one-sided point limits: shrinking intervals [x - d, x] and [x, x + d]
    pts = np.full(z.size, -np.inf)
    inner = slice(1, z.size - 1)
    if z.size > 2:
        pts[inner] = np.maximum(np.abs(np.asarray(w(z[inner]), dtype=float)),
                                np.abs(np.asarray(w.left_limit(z[inner]), dtype=float)))
    if not (z[0] == 0 and w.singular_left):
        pts[0] = abs(float(w(z[0])))
    pts[-1] = abs(float(w.left_limit(z[-1])))
    return np.maximum(M, pts)


def maximal_on_grid(w: FuncExpr | GridFunction, g: Grid, I0: Interval | None = None,
                    cfg: NumericConfig | None = None, mode: Literal["fast", "exact"] = "fast") -> GridFunction:
    """``Mw`` at the nodes of ``g``; suprema run over subintervals of ``I0`` with node endpoints.

    ``I0`` defaults to the grid span.  When ``I0`` starts below the first node
    (a singular left end), that end is added as an extra left endpoint.
    """
    cfg = cfg or NumericConfig()
    w = _as_expr(w)
    I0 = I0 or Interval(g.lo, g.hi)
    if g.lo < I0.lo or g.hi > I0.hi:
        raise ValueError("grid must lie inside the ambient interval")
    z = _scan_nodes(g, I0)
    _check_nonnegative(w, z)
    vals = maximal_values(w, z, I0, cfg, mode)
    keep = np.isin(z, g.nodes)
    return GridFunction(g, vals[keep], "piecewise_linear")


def maximal_at_point(w: FuncExpr | GridFunction, x: float, g: Grid, I0: Interval | None = None,
                     cfg: NumericConfig | None = None) -> float:
    if not g.lo <= x <= g.hi:
        raise ValueError(f"x={x} outside the grid span [{g.lo}, {g.hi}]")
    nodes = np.unique(np.append(g.nodes, x))
    G = Grid(nodes, g.cluster_end)
    out = maximal_on_grid(w, G, I0, cfg)
    return float(out.values[np.searchsorted(nodes, x)])
