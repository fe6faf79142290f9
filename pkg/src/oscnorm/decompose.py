"""Constructive Coifman-Rochberg factorisation and the BLO decomposition built on it."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .domain import Grid, Interval, NumericConfig
from .functions import FuncExpr, GridFunction, default_grid, exp_scale, power
from .maximal import maximal_values
from .oscillation import _scan_nodes, blo_seminorm
from .weights import REVERSE_HOLDER_BOUND, a1_constant, reverse_holder_search

MAX_MU_ATTEMPTS = 20


@dataclass(frozen=True)
class Decomposition:
    eta: float
    epsilon: float
    b: GridFunction
    g: FuncExpr
    a_lower: float
    source_a1: float
    Mg: GridFunction
    ambient: Interval

    def to_dict(self, residual: float | None = None) -> dict:
        return {
            "eta": self.eta,
            "epsilon": self.epsilon,
            "a_lower": self.a_lower,
            "b_min": float(np.min(self.b.values)),
            "b_max": float(np.max(self.b.values)),
            "source_a1": self.source_a1,
            "g": self.g.to_text(),
            "residual": residual,
            "ambient": self.ambient.as_list(),
            "nodes": int(self.b.grid.nodes.size),
        }

    def to_json(self, residual: float | None = None) -> str:
        return json.dumps(self.to_dict(residual), sort_keys=True)


class DecompositionError(ValueError):
    pass


def _node_grid(w: FuncExpr, I0: Interval, cfg: NumericConfig, grid: Grid | None):
    g = grid or default_grid(w, I0, cfg.grid_size, cfg)
    z = _scan_nodes(g, I0)
    keep = np.isin(z, g.nodes)
    return g, z, keep


def coifman_rochberg(w: FuncExpr, I0: Interval, eta: float | None = None, cfg: NumericConfig | None = None,
                     grid: Grid | None = None, tol: float = 1e-9) -> Decomposition:
    """Factor ``w = b (Mg)^eps`` with ``g = w^{1+eta}``, ``eps = 1/(1+eta)``.

    ``b`` is evaluated at grid nodes; the maximal function is localised to ``I0``.
    """
    cfg = cfg or NumericConfig()
    if eta is None:
        eta, _ = reverse_holder_search(w, I0, cfg, grid)
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    g_grid, z, keep = _node_grid(w, I0, cfg, grid)
    rep = a1_constant(w, I0, cfg, g_grid)
    A = rep.constant
    if not math.isfinite(A):
        raise DecompositionError(f"{w.to_text()} has no finite A1 estimate on ({I0.lo}, {I0.hi})")
    eps = 1.0 / (1.0 + eta)
    g = power(w, 1.0 + eta)
    Mg = maximal_values(g, z, I0, cfg)[keep]
    nodes = g_grid.nodes
    wv = np.asarray(w(nodes), dtype=float)
    b = wv / Mg**eps
    a_lower = 1.0 / (REVERSE_HOLDER_BOUND * A)
    if np.any(b > 1.0 + tol) or np.any(b < a_lower * (1.0 - tol)):
        raise DecompositionError(
            f"b left [{a_lower:.6g}, 1]: min={b.min():.6g}, max={b.max():.6g}; eta={eta} too large?"
        )
    return Decomposition(
        eta, eps, GridFunction(g_grid, b), g, a_lower, A, GridFunction(g_grid, Mg), I0
    )


def verify_decomposition(d: Decomposition, w: FuncExpr, grid: Grid | None = None,
                         cfg: NumericConfig | None = None) -> float:
    """``max |w - b (Mg)^eps| / w`` over the nodes, with ``Mg`` recomputed from ``g``."""
    cfg = cfg or NumericConfig()
    g_grid = grid or d.b.grid
    z = _scan_nodes(g_grid, d.ambient)
    keep = np.isin(z, g_grid.nodes)
    Mg = maximal_values(d.g, z, d.ambient, cfg)[keep]
    b = d.b.values if g_grid == d.b.grid else np.interp(g_grid.nodes, d.b.grid.nodes, d.b.values)
    wv = np.asarray(w(g_grid.nodes), dtype=float)
    return float(np.max(np.abs(wv - b * Mg**d.epsilon) / wv))


@dataclass(frozen=True)
class BloDecomposition:
    """``f = alpha log(M g) + B`` with ``B = b_bounded`` bounded; ``norm_bound = alpha + sup|B|``.

    ``g`` is stored unscaled; the actual factor is ``exp(g_log_scale) * g``, which
    absorbs the shift used to keep ``exp(f/mu)`` in floating-point range.
    """

    alpha: float
    b_bounded: GridFunction
    g: FuncExpr
    norm_bound: float
    mu: float
    eta: float
    g_log_scale: float
    blo: float
    decomposition: Decomposition

    @property
    def ratio(self) -> float:
        return self.norm_bound / self.blo if self.blo > 0 else math.nan

    def reconstruct(self, nodes=None) -> np.ndarray:
        """``alpha log(M g) + B`` at the decomposition nodes."""
        d = self.decomposition
        return self.alpha * (np.log(d.Mg.values) + self.g_log_scale) + self.b_bounded.values

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "sup_abs_b": float(np.max(np.abs(self.b_bounded.values))),
            "norm_bound": self.norm_bound,
            "mu": self.mu,
            "eta": self.eta,
            "epsilon": self.decomposition.epsilon,
            "blo": self.blo,
            "ratio": None if math.isnan(self.ratio) else self.ratio,
            "g": self.g.to_text(),
            "g_log_scale": self.g_log_scale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def blo_upper_decomposition(f: FuncExpr, I0: Interval, cfg: NumericConfig | None = None,
                            sigma_bracket=None) -> BloDecomposition:
    """Certified upper bound on the decomposition norm of ``f`` on ``I0``.

    ``mu`` starts at the sigma upper endpoint (or ``4 * blo / c2`` when sigma is
    unavailable) and doubles until ``exp(f/mu)`` factors with ``b`` in bounds.
    """
    from .distance import sigma

    cfg = cfg or NumericConfig()
    blo = blo_seminorm(f, I0, cfg).value
    if not math.isfinite(blo):
        raise DecompositionError(f"{f.to_text()} has infinite lower oscillation")
    if sigma_bracket is None:
        try:
            sigma_bracket = sigma(f, I0, cfg)
        except (ValueError, RuntimeError):
            sigma_bracket = None
    mu = sigma_bracket.upper if sigma_bracket is not None and sigma_bracket.upper > 0 else 0.0
    if mu <= 0:
        mu = 4.0 * blo / cfg.jn_c2 if blo > 0 else 1.0
    shift = float(f.ess_inf(I0.lo, I0.hi))
    if not math.isfinite(shift):
        shift = 0.0
    last_error: Exception | None = None
    for _ in range(MAX_MU_ATTEMPTS):
        w = exp_scale(f, mu, shift)
        try:
            dec = coifman_rochberg(w, I0, None, cfg)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            # overflow in exp(f/mu), quadrature failure or b out of bounds
            last_error = exc
            mu *= 2.0
            continue
        alpha = mu * dec.epsilon
        B = mu * np.log(dec.b.values)
        # f = mu log w + shift = alpha log(M g) + mu log b + shift; fold shift into g
        g_log_scale = shift / alpha
        norm_bound = alpha + float(np.max(np.abs(B)))
        return BloDecomposition(
            alpha, GridFunction(dec.b.grid, B), dec.g, norm_bound, mu, dec.eta, g_log_scale, blo, dec
        )
    raise DecompositionError(f"no admissible mu for {f.to_text()} after {MAX_MU_ATTEMPTS} doublings: {last_error}")
