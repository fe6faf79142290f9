"""A1 constants, membership, reverse Hoelder exponents and closed-form A1 values."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .domain import Grid, Interval, NumericConfig
from .functions import FuncExpr, default_grid, power
from .oscillation import _prefix, _scan_nodes, search

REVERSE_HOLDER_BOUND = 2.0 * math.e
ETA_LADDER = tuple(2.0**-i for i in range(1, 13))


@dataclass(frozen=True)
class A1Report:
    constant: float
    witness: Interval
    levels: list
    stable: bool
    left_anchored_value: float | None = None
    exact: bool = True
    ambient: Interval | None = None

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "witness": self.witness.as_list(),
            "levels": [[int(m), float(v)] for m, v in self.levels],
            "stable": self.stable,
            "left_anchored_value": self.left_anchored_value,
            "exact": self.exact,
            "ambient": None if self.ambient is None else self.ambient.as_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def a1_constant(w: FuncExpr, I0: Interval, cfg: NumericConfig | None = None, grid: Grid | None = None) -> A1Report:
    """``sup_I avg_I w / inf_I w`` over subintervals of ``I0``."""
    cfg = cfg or NumericConfig()
    g = grid or default_grid(w, I0, cfg.grid_size, cfg)
    z = _scan_nodes(g, I0)
    inner = z[1:-1]
    if inner.size and np.any(np.asarray(w(inner)) <= 0):
        raise ValueError(f"weight {w.to_text()} is not positive on the grid")
    res = search(w, I0, "a1", cfg, g)
    return A1Report(res.value, res.witness, res.levels, res.converged, res.left_anchored_value, res.exact, I0)


def a1_membership(w: FuncExpr, I0: Interval, cap: float | None = None,
                  cfg: NumericConfig | None = None) -> tuple[bool, A1Report]:
    """Operational membership: estimate within ``cap`` and stable across the last two levels."""
    cfg = cfg or NumericConfig()
    cap = cfg.a1_cap if cap is None else cap
    rep = a1_constant(w, I0, cfg)
    return bool(math.isfinite(rep.constant) and rep.constant <= cap and rep.stable), rep


def reverse_holder_ratio(w: FuncExpr, I0: Interval, eta: float, cfg: NumericConfig | None = None,
                         grid: Grid | None = None) -> tuple[float, Interval]:
    """Max over node-pair intervals of ``(avg w^{1+eta})^{1/(1+eta)} / avg w``."""
    cfg = cfg or NumericConfig()
    g = grid or default_grid(w, I0, cfg.grid_size, cfg)
    z = _scan_nodes(g, I0)
    F, _ = _prefix(w, z, cfg)
    G, _ = _prefix(power(w, 1.0 + eta), z, cfg)
    best, bj, bk = -np.inf, 0, 1
    q = 1.0 / (1.0 + eta)
    for j in range(z.size - 1):
        L = z[j + 1 :] - z[j]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            r = ((G[j + 1 :] - G[j]) / L) ** q / ((F[j + 1 :] - F[j]) / L)
        r = np.where(np.isnan(r), np.inf, r)
        k = int(np.argmax(r))
        if r[k] > best + 1e-12 * max(1.0, abs(best) if math.isfinite(best) else 1.0):
            best, bj, bk = float(r[k]), j, j + 1 + k
    return best, Interval(z[bj], z[bk])


def reverse_holder_search(w: FuncExpr, I0: Interval, cfg: NumericConfig | None = None,
                          grid: Grid | None = None) -> tuple[float, float]:
    """Largest ladder exponent whose reverse Hoelder ratio stays below ``2e``."""
    cfg = cfg or NumericConfig()
    for eta in ETA_LADDER:
        c, _ = reverse_holder_ratio(w, I0, eta, cfg, grid)
        if c < REVERSE_HOLDER_BOUND:
            return eta, c
    raise ValueError(f"no reverse Hoelder exponent in the ladder for {w.to_text()}")


def gr_a1_closed_form(r: int) -> float:
    """A1 constant of ``(-log x)^r`` on ``(0, 1/e)`` via ``f_r(1) = 1/e + r f_{r-1}(1)``."""
    if int(r) != r or r < 1:
        raise ValueError("r must be a positive integer")
    f = math.exp(-1.0)
    for j in range(1, int(r) + 1):
        f = math.exp(-1.0) + j * f
    return math.e * f


def neglog_a1_on_initial_segment(t: float) -> float:
    """A1 constant of ``-log x`` on ``(0, e^{-t})`` for ``t >= 1``: ``1 + 1/t``."""
    if t < 1:
        raise ValueError("closed form needs t >= 1")
    return 1.0 + 1.0 / t
