"""Sigma bracketing, distance-to-L-infinity reports and the critical exponent root finder.

``sigma(f)`` is the infimum of ``mu > 0`` with ``exp(f/mu)`` an A1 weight on the
ambient interval.  Catalog members with a known A1 behaviour are decided by a
closed-form oracle; everything else goes through the grid membership test.
Every probe records which of the two produced it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from scipy import special

from .domain import Interval, NumericConfig
from .functions import (
    Const,
    FuncExpr,
    JumpEta,
    LogNegLog,
    NegLog,
    NegLogPow,
    Scale,
    Sum,
    exp_scale,
    integrate,
)
from .oscillation import blo_seminorm
from .weights import a1_membership

CLOSURE_THRESHOLD = 1e-2
MAX_DOUBLINGS = 20


class OracleAnswer(NamedTuple):
    finite: bool
    value: float | None


def _log_neglog_power_ratio(p: float, t: float) -> float:
    """``log(e^t Gamma(p+1, t) / t^p)``: left-anchored A1 ratio of ``(-log x)^p`` at ``x = e^{-t}``."""
    q = special.gammaincc(p + 1.0, t)
    if q <= 0:
        # regularised tail underflowed; Gamma(p+1, t) ~ t^p e^{-t} (1 + p/t) for t >> p
        return math.log1p(p / t)
    return t + special.gammaln(p + 1.0) + math.log(q) - p * math.log(t)


def _capped_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _jump_a1(f: JumpEta, r: float, b: float) -> float:
    """A1 constant of ``exp(r * eta)`` on ``(0, b)`` for the doubly geometric jump function.

    For a decreasing weight the supremum runs over initial segments ``(0, y)``;
    the best ``y`` sits just right of a level ``a_n``, which gives
    ``R_n = sum_{m >= n} e^{r(m - n + 1)} (a_m - a_{m+1}) / a_n``.
    """
    n0 = int(f.left_limit(b)) + 1
    best = -math.inf
    for n in range(max(n0, 1), n0 + 60):
        logs = []
        for m in range(n, n + 12):
            # log of e^{r(m-n+1)} (a_m - a_{m+1}) / a_n with a_m = exp(-e^m)
            gap = -math.expm1(-(math.exp(m + 1) - math.exp(m)))
            log_term = r * (m - n + 1) - math.exp(n) * math.expm1(m - n) + math.log(gap)
            if logs and log_term < logs[0] - 800:
                break
            logs.append(log_term)
        best = max(best, float(special.logsumexp(logs)))
    return _capped_exp(best)


def exp_a1_oracle(f: FuncExpr, mu: float, I0: Interval) -> OracleAnswer | None:
    """Closed-form A1 verdict for ``exp(f/mu)`` on ``I0``, or ``None`` when unknown."""
    if isinstance(f, Const):
        return OracleAnswer(True, 1.0)
    if isinstance(f, Scale):
        return exp_a1_oracle(f.inner, mu / f.c, I0)
    if f.bounded:
        return OracleAnswer(True, None)
    p = 1.0 / mu
    if isinstance(f, NegLog) or (isinstance(f, NegLogPow) and f.r == 1):
        if I0.lo > 0:
            return OracleAnswer(True, None)
        return OracleAnswer(True, 1.0 / (1.0 - p)) if p < 1 else OracleAnswer(False, math.inf)
    if isinstance(f, LogNegLog):
        if I0.lo > 0:
            return OracleAnswer(True, None)
        if I0.hi <= math.exp(-1.0):
            return OracleAnswer(True, _capped_exp(_log_neglog_power_ratio(p, -math.log(I0.hi))))
        return OracleAnswer(True, None)
    if isinstance(f, NegLogPow):
        if I0.lo > 0:
            return OracleAnswer(True, None)
        return OracleAnswer(False, math.inf)
    if isinstance(f, JumpEta) and f.kind == "geom_double":
        if I0.lo > 0:
            return OracleAnswer(True, None)
        return OracleAnswer(True, _jump_a1(f, p, I0.hi))
    if isinstance(f, Sum):
        if f.right.bounded:
            ans = exp_a1_oracle(f.left, mu, I0)
        elif f.left.bounded:
            ans = exp_a1_oracle(f.right, mu, I0)
        else:
            return None
        return None if ans is None else OracleAnswer(ans.finite, None)
    return None


@dataclass(frozen=True)
class Probe:
    mu: float
    member: bool
    a1: float
    mode: str  # "oracle" or "grid"


def membership_probe(f: FuncExpr, mu: float, I0: Interval, cfg: NumericConfig, cap: float,
                     use_oracle: bool = True) -> Probe:
    ans = exp_a1_oracle(f, mu, I0) if use_oracle else None
    if ans is not None:
        a1 = ans.value if ans.value is not None else math.nan
        return Probe(mu, ans.finite, a1, "oracle")
    shift = float(f.ess_inf(I0.lo, I0.hi))
    if not math.isfinite(shift):
        shift = 0.0
    w = exp_scale(f, mu, shift)
    try:
        ok, rep = a1_membership(w, I0, cap, cfg)
    except (ValueError, ArithmeticError, RuntimeError):
        # overflow or failed quadrature: no certificate of membership at this mu
        return Probe(mu, False, math.inf, "grid")
    return Probe(mu, ok, rep.constant, "grid")


@dataclass(frozen=True)
class SigmaBracket:
    lower: float
    upper: float
    cap_used: float
    evaluations: list = field(default_factory=list)
    ambient: Interval | None = None

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "cap_used": self.cap_used,
            "ambient": None if self.ambient is None else self.ambient.as_list(),
            "evaluations": [
                {"mu": p.mu, "member": p.member, "a1": None if math.isnan(p.a1) else p.a1, "mode": p.mode}
                for p in self.evaluations
            ],
        }


def sigma(f: FuncExpr, I0: Interval, cfg: NumericConfig | None = None, cap: float | None = None,
          use_oracle: bool = True) -> SigmaBracket:
    """Bracket ``sigma(f) = inf{mu > 0 : exp(f/mu) in A1(I0)}`` by doubling then bisection."""
    cfg = cfg or NumericConfig()
    cap = cfg.a1_cap if cap is None else cap
    blo = blo_seminorm(f, I0, cfg).value
    if not math.isfinite(blo):
        raise ValueError(f"{f.to_text()} has infinite lower oscillation on ({I0.lo}, {I0.hi})")
    start = 2.0 * blo / cfg.jn_c2 if blo > 0 else 1.0
    evals: list[Probe] = []

    def probe(mu):
        p = membership_probe(f, mu, I0, cfg, cap, use_oracle)
        evals.append(p)
        return p.member

    lower, upper = 0.0, start
    doublings = 0
    while not probe(upper):
        lower = upper
        upper *= 2.0
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise ValueError(f"no A1 membership up to mu={upper:g}; {f.to_text()} looks outside BLO")
    while upper - lower > max(1e-3, 1e-2 * upper):
        mid = 0.5 * (lower + upper)
        if probe(mid):
            upper = mid
        else:
            lower = mid
    return SigmaBracket(lower, upper, cap, evals, I0)


@dataclass(frozen=True)
class DistReport:
    sigma_bracket: SigmaBracket
    norm_bound: float
    closure_flag: bool
    blo: float

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma_bracket.to_dict(),
            "norm_bound": self.norm_bound,
            "closure_flag": self.closure_flag,
            "blo": self.blo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def dist_report(f: FuncExpr, I0: Interval, cfg: NumericConfig | None = None,
                threshold: float = CLOSURE_THRESHOLD) -> DistReport:
    """Sigma bracket plus a decomposition-based norm bound; ``closure_flag`` when sigma is ~0."""
    from .decompose import blo_upper_decomposition

    cfg = cfg or NumericConfig()
    br = sigma(f, I0, cfg)
    dec = blo_upper_decomposition(f, I0, cfg, sigma_bracket=br)
    return DistReport(br, dec.norm_bound, br.upper <= threshold, dec.blo)


# ---------------------------------------------------------------------------------
# critical exponent for exponential integrability
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalExponent:
    mu: float
    lam: float
    all_feasible: bool


def exp_average(h: FuncExpr, I: Interval, lam: float) -> float:
    """``avg_I exp(lam * h)``."""
    if lam == 0:
        return 1.0
    return integrate(exp_scale(h, 1.0 / lam), I).value / I.length


def _log_exp_average(h: FuncExpr, I: Interval, lam: float, shift: float) -> float:
    # log avg exp(lam h) evaluated as lam*shift + log avg exp(lam (h - shift))
    val = integrate(exp_scale(h, 1.0 / lam, shift), I).value / I.length
    return math.log(val) + lam * shift if val > 0 else -math.inf


def exp_critical_exponent(h: FuncExpr, I: Interval, C: float, rel_tol: float = 1e-14) -> CriticalExponent:
    """Smallest ``mu`` with ``avg_I exp(h/mu) <= C``.

    ``lam -> avg exp(lam h)`` is convex and equals 1 at ``lam = 0``, so the
    feasible ``lam`` form an interval ``[0, lam*]`` and ``mu* = 1/lam*``.
    """
    top = float(h.ess_sup(I.lo, I.hi))
    if not math.isfinite(top) or not math.isfinite(float(h.ess_inf(I.lo, I.hi))):
        raise ValueError("exp_critical_exponent needs a bounded h")
    if h.is_constant:
        c = float(h(0.5 * (I.lo + I.hi)))
        if c == 0:
            return CriticalExponent(0.0, math.inf, True)
        if C <= 1:
            raise ValueError("C must exceed 1 for nonzero h")
        if c < 0:
            return CriticalExponent(0.0, math.inf, True)
        return CriticalExponent(c / math.log(C), math.log(C) / c, False)
    if C <= 1:
        raise ValueError("C must exceed 1 for nonzero h")
    if top <= 0:
        return CriticalExponent(0.0, math.inf, True)
    logC = math.log(C)

    def ok(lam):
        return _log_exp_average(h, I, lam, top) <= logC

    hi = 1.0
    while ok(hi):
        hi *= 2.0
        if hi > 1e300:
            return CriticalExponent(0.0, math.inf, True)
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return CriticalExponent(1.0 / lo if lo > 0 else math.inf, lo, False)
