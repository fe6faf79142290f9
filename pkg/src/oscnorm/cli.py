"""Command-line front end: ``osc <verb> [options]``.

Exit codes: 0 on success, 1 on a numerical failure (or a failing ``reproduce``
row), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .approx import convolution_error, decreasing_rearrangement, k_of_r, truncation_sweep
from .decompose import blo_upper_decomposition, coifman_rochberg, verify_decomposition
from .distance import exp_a1_oracle, sigma
from .domain import Interval, NumericConfig, uniform_grid
from .functions import (
    CATALOG,
    Const,
    ExprSyntaxError,
    FuncExpr,
    JumpEta,
    LogNegLog,
    NegLog,
    NegLogPow,
    Scale,
    exp_scale,
    parse_expr,
)
from .oscillation import blo_seminorm, bmo_seminorm
from .weights import a1_constant, a1_membership, gr_a1_closed_form

J = Interval(0.0, math.exp(-1.0))
REPRODUCE_IDS = ("gr-a1", "jk-constant", "trunc-logneglog", "jump-lower-bound", "kr-series", "mollify-vlo", "sigma-catalog")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Row:
    case: str
    measured: float
    expected: float
    tolerance: float
    passed: bool


def _fmt12(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def _rel_ok(m: float, e: float, tol: float) -> bool:
    return abs(m - e) <= tol * abs(e)


# ---------------------------------------------------------------------------------
# reproduce tables
# ---------------------------------------------------------------------------------


def reproduce_gr_a1(cfg: NumericConfig, rs=(1, 2, 3, 4, 5)) -> list[Row]:
    rows = []
    for r in rs:
        m = a1_constant(NegLogPow(int(r)), J, cfg).constant
        e = gr_a1_closed_form(int(r))
        rows.append(Row(f"r={r}", m, e, 1e-3, _rel_ok(m, e, 1e-3)))
    return rows


def reproduce_jk_constant(cfg: NumericConfig, ks=(1, 2, 3, 4, 5, 6)) -> list[Row]:
    rows = []
    for k in ks:
        I = Interval(0.0, math.exp(-math.exp(k)))
        m = a1_constant(NegLog(), I, cfg).constant
        e = (1.0 + math.exp(k)) / math.exp(k)
        rows.append(Row(f"k={k}", m, e, 1e-3, _rel_ok(m, e, 1e-3)))
    return rows


def reproduce_trunc_logneglog(cfg: NumericConfig, ks=(1, 2, 3, 4, 5, 6)) -> list[Row]:
    sw = truncation_sweep(LogNegLog(), J, ks, cfg)
    rows = []
    prev = math.inf
    for k, m, b in zip(sw.params, sw.measured, sw.bound):
        ok = 0.0 <= m <= b + 1e-3 and m < prev
        prev = m
        rows.append(Row(f"k={k:g}", m, b, 1e-3, bool(ok)))
    return rows


def reproduce_jump_lower_bound(cfg: NumericConfig, ks=(1, 2, 3, 4), rs=(1, 2, 3)) -> list[Row]:
    f = JumpEta.geom_double()
    sw = truncation_sweep(f, J, ks, cfg)
    rows = [Row(f"blo(f-T_{k:g}f)", m, 1.0, 1e-3, bool(m >= 1.0 - 1e-3)) for k, m in zip(sw.params, sw.measured)]
    for r in rs:
        ok, rep = a1_membership(exp_scale(f, 1.0 / r), J, cfg=cfg)
        K, _ = k_of_r(r, 40)
        rows.append(Row(f"A1(exp({r}f))", rep.constant, K, 1e-3, bool(ok and rep.constant <= K + 1e-3)))
    return rows


def reproduce_kr_series(cfg: NumericConfig, rs=(0, 1, 2, 3)) -> list[Row]:
    f = JumpEta.geom_double()
    rows = []
    for r in rs:
        K, tail = k_of_r(r, 40)
        rows.append(Row(f"K({r}) tail", tail, 0.0, 1e-8, bool(tail < 1e-8)))
        if r > 0:
            a1 = exp_a1_oracle(f, 1.0 / r, J).value
            rows.append(Row(f"A1(exp({r}f)) <= K({r})", a1, K, 1e-3, bool(a1 <= K + 1e-3)))
    return rows


def reproduce_mollify_vlo(cfg: NumericConfig, eps=(1e-4, 1e-3, 1e-2, 1e-1)) -> list[Row]:
    I = Interval(math.exp(-math.e**2), math.exp(-1.0))
    sw = convolution_error(LogNegLog(), I, eps, cfg=cfg)
    return [Row(f"eps={e:g}", m, b, 0.0, bool(m <= b)) for e, m, b in zip(sw.params, sw.measured, sw.bound)]


def reproduce_sigma_catalog(cfg: NumericConfig) -> list[Row]:
    rows = []
    c = sigma(Const(3.0), Interval(0.0, 1.0), cfg)
    rows.append(Row("const:3 upper", c.upper, 0.0, 1e-3, c.upper <= 1e-3))
    ll = sigma(LogNegLog(), J, cfg)
    rows.append(Row("logneglog upper", ll.upper, 0.0, 1e-2, ll.upper <= 1e-2))
    U = Interval(0.0, 1.0)
    nl = sigma(NegLog(), U, cfg)
    ok = nl.lower - 0.05 <= 1.0 <= nl.upper + 0.05
    rows.append(Row("neglog on (0,1) bracket", 0.5 * (nl.lower + nl.upper), 1.0, 0.05, ok))
    s2 = sigma(Scale(NegLog(), 2.0), U, cfg)
    # merged tolerance: widths of both brackets plus the 0.05 window scaled by 2
    tol = (s2.upper - s2.lower) + 2.0 * (nl.upper - nl.lower) + 0.1
    mid2 = 0.5 * (s2.lower + s2.upper)
    mid1 = 0.5 * (nl.lower + nl.upper)
    rows.append(Row("scale(neglog,2) / 2", mid2, 2.0 * mid1, tol, abs(mid2 - 2.0 * mid1) <= tol))
    return rows


def _reproduce(args, cfg: NumericConfig) -> list[Row]:
    rid = args.example
    if rid == "gr-a1":
        return reproduce_gr_a1(cfg, args.r or (1, 2, 3, 4, 5))
    if rid == "jk-constant":
        return reproduce_jk_constant(cfg, args.k or (1, 2, 3, 4, 5, 6))
    if rid == "trunc-logneglog":
        return reproduce_trunc_logneglog(cfg, args.k or (1, 2, 3, 4, 5, 6))
    if rid == "jump-lower-bound":
        return reproduce_jump_lower_bound(cfg, args.k or (1, 2, 3, 4), args.r or (1, 2, 3))
    if rid == "kr-series":
        return reproduce_kr_series(cfg, args.r or (0, 1, 2, 3))
    if rid == "mollify-vlo":
        return reproduce_mollify_vlo(cfg)
    return reproduce_sigma_catalog(cfg)


# ---------------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------------


def _table_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt12(x) for x in r])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dict_csv(d: dict) -> str:
    flat = {k: v for k, v in d.items() if not isinstance(v, (dict, list))}
    for k, v in d.items():
        if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
            flat[k + "_lo"], flat[k + "_hi"] = v
    keys = sorted(flat)
    return _table_csv(keys, [[flat[k] for k in keys]])


def _render(d: dict, fmt: str) -> str:
    return _json(d) if fmt == "json" else _dict_csv(d)


# ---------------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------------


def _need_fn(args) -> FuncExpr:
    if not args.fn:
        raise UsageError(f"--fn is required for {args.verb}")
    return parse_expr(args.fn)


def _need_interval(args, f: FuncExpr | None = None) -> Interval:
    if args.interval is None:
        # functions without a natural domain default to the unit interval
        d = f.domain if f is not None else None
        return d if d is not None else Interval(0.0, 1.0)
    lo, hi = args.interval
    try:
        return Interval(lo, hi)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_report(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    rep = (bmo_seminorm if args.kind == "bmo" else blo_seminorm)(f, I0, cfg)
    return _render(rep.to_dict(), args.format or "json"), 0


def cmd_a1(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    ok, rep = a1_membership(f, I0, args.cap, cfg)
    d = rep.to_dict()
    d["member"] = ok
    d["cap"] = cfg.a1_cap if args.cap is None else args.cap
    return _render(d, args.format or "json"), 0


def cmd_sigma(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    br = sigma(f, I0, cfg, args.cap, use_oracle=not args.no_oracle)
    if (args.format or "json") == "json":
        return _json(br.to_dict()), 0
    rows = [[p.mu, p.member, p.a1, p.mode] for p in br.evaluations]
    head = f"# lower={_fmt12(br.lower)} upper={_fmt12(br.upper)}\n"
    return head + _table_csv(["mu", "member", "a1", "mode"], rows), 0


def cmd_decompose(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    if args.weight:
        d = coifman_rochberg(f, I0, args.eta, cfg)
        res = verify_decomposition(d, f, cfg=cfg)
        return _render(d.to_dict(res), args.format or "json"), 0
    dec = blo_upper_decomposition(f, I0, cfg)
    return _render(dec.to_dict(), args.format or "json"), 0


def _sweep_out(sw, fmt):
    if fmt == "json":
        rows = [dict(zip(("param", "measured", "bound", "witness_lo", "witness_hi"), r)) for r in sw.rows()]
        return _json({"bound_kind": sw.bound_kind, "rows": rows})
    return sw.to_csv()


def cmd_truncation_sweep(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    ks = args.k or [1, 2, 3, 4]
    return _sweep_out(truncation_sweep(f, I0, ks, cfg), args.format or "csv"), 0


def cmd_mollify(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    eps = args.eps or [1e-1, 1e-2, 1e-3, 1e-4]
    return _sweep_out(convolution_error(f, I0, eps, args.shape, cfg), args.format or "csv"), 0


def cmd_rearrange(args, cfg):
    f = _need_fn(args)
    I0 = _need_interval(args, f)
    g = uniform_grid(Interval(0.0, I0.length), args.grid_size or 65)
    fs = decreasing_rearrangement(f, I0, g, cfg)
    if (args.format or "csv") == "json":
        return _json({"t": g.nodes.tolist(), "value": fs.values.tolist()}), 0
    return _table_csv(["t", "value"], list(zip(g.nodes, fs.values))), 0


def cmd_reproduce(args, cfg):
    rows = _reproduce(args, cfg)
    ok = all(r.passed for r in rows)
    if (args.format or "csv") == "json":
        text = _json({"example": args.example, "passed": ok, "rows": [asdict(r) for r in rows]})
    else:
        text = _table_csv(["case", "measured", "expected", "tolerance", "pass"],
                          [[r.case, r.measured, r.expected, r.tolerance, r.passed] for r in rows])
    return text, 0 if ok else 1


VERBS = {
    "report": cmd_report,
    "a1": cmd_a1,
    "sigma": cmd_sigma,
    "decompose": cmd_decompose,
    "truncation-sweep": cmd_truncation_sweep,
    "mollify": cmd_mollify,
    "rearrange": cmd_rearrange,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fn", help="function in text form, e.g. 'trunc(logneglog, 2)'")
    common.add_argument("--interval", nargs=2, type=float, metavar=("LO", "HI"))
    common.add_argument("--grid-size", type=int)
    common.add_argument("--cap", type=float, help="A1 membership cap")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--config", metavar="PATH", help="key = value numeric configuration file")

    p = argparse.ArgumentParser(prog="osc", description="Oscillation seminorms, A1 weights and BLO distances.",
                                epilog="function catalog: " + ", ".join(CATALOG))
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("report", parents=[common], help="BMO or BLO seminorm")
    r.add_argument("--kind", choices=("bmo", "blo"), default="blo")
    sub.add_parser("a1", parents=[common], help="A1 constant and membership of a weight")
    s = sub.add_parser("sigma", parents=[common], help="bracket the critical exponential scale")
    s.add_argument("--no-oracle", action="store_true", help="always use grid membership")
    d = sub.add_parser("decompose", parents=[common], help="BLO decomposition (or a weight factorisation)")
    d.add_argument("--weight", action="store_true", help="treat --fn as an A1 weight and factor it")
    d.add_argument("--eta", type=float)
    t = sub.add_parser("truncation-sweep", parents=[common], help="lower oscillation of f - T_k f")
    t.add_argument("--k", type=float, nargs="+")
    m = sub.add_parser("mollify", parents=[common], help="mollification error against 2C W_2eps")
    m.add_argument("--eps", type=float, nargs="+")
    m.add_argument("--shape", choices=("triangle", "cosine_bump"), default="triangle")
    sub.add_parser("rearrange", parents=[common], help="decreasing rearrangement on a uniform grid")
    x = sub.add_parser("reproduce", parents=[common], help="comparison tables for the reference examples")
    x.add_argument("example", choices=REPRODUCE_IDS)
    x.add_argument("--k", type=int, nargs="+")
    x.add_argument("--r", type=int, nargs="+")
    return p


def _config(args) -> NumericConfig:
    try:
        cfg = NumericConfig.from_file(args.config) if args.config else NumericConfig()
        over = {"grid_size": args.grid_size}
        if args.cap is not None:
            over["a1_cap"] = args.cap
        return cfg.with_overrides(**over)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        text, code = VERBS[args.verb](args, cfg)
    except (UsageError, ExprSyntaxError) as exc:
        print(f"osc: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"osc: numerical failure: {exc}", file=sys.stderr)
        return 1
    _emit(text, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
