"""Command-line sweeps writing plot-ready CSV tables.

Every table command writes ``--out`` plus a JSON manifest next to it
(``<out>.manifest.json``). Failures print one JSON line on stderr and exit
nonzero; malformed configs exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dmc_core import assumption_report, load_config
from .errors import ConfigError, DivergentPrefactorError, SingularTripleError, TargetUnreachable
from .exponents import exponent_chain, exponent_s
from .finite_bounds import (
    GRID_STEP,
    log_m_minus_one,
    montecarlo_pe,
    rcu_exact,
    rcu_table,
    rcus_exact,
    rcuss_exact,
)
from .rates import gmi, lm_primal_upper, lm_rate, mutual_information
from .saddlepoint import (
    exact_asymptotics_prefactor,
    exponent_approx,
    normal_approx_pe,
    normal_approx_rate,
    rate_for_epsilon,
    rcus_hat,
    rcuss_hat,
)
from .tilted import detect_lattice, make_family, rho_hat

LN2 = math.log(2.0)
BOUND_NAMES = ("rcu", "rcus", "rcus_hat", "rcuss", "rcuss_hat", "normal", "exponent_approx")


class UsageError(ValueError):
    pass


def parse_grid(text: str, integer: bool = False) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must be START:STOP:STEP, got {text!r}") from None
    if not step > 0 or stop < start:
        raise UsageError("grid must be nonempty and strictly increasing")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    g = np.round(start + step * np.arange(count), 12)
    if integer:
        g = np.round(g).astype(int)
        if np.any(np.diff(g) <= 0):
            raise UsageError("integer grid must be strictly increasing")
    return g


def _to_units(x: float, units: str) -> float:
    return x / LN2 if units == "bits" else x


def _from_units(x: float, units: str) -> float:
    return x * LN2 if units == "bits" else x


def _s_arg(value: str):
    if value == "auto":
        return None
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"--s must be a number or 'auto', got {value!r}") from None


def _log10(p: float) -> float:
    return math.log10(p) if p > 0 else -math.inf


def _safe(fn):
    try:
        return fn()
    except (SingularTripleError, DivergentPrefactorError, TargetUnreachable):
        return math.nan


# ---------------------------------------------------------------- per-point workers (top level for pickling)


def _row_exponents(rate_units, channel, units):
    t = load_config(channel)
    R = _from_units(rate_units, units)
    ch = exponent_chain(t, R)
    return [rate_units] + [_to_units(ch[k].value, units) for k in ("iid", "cost1", "cost_prime", "cc")]


def _row_bounds(rate_units, channel, units, n, s, step, bracket, names):
    t = load_config(channel)
    R = _from_units(rate_units, units)
    s_eff = exponent_s(t, R) if s is None else s
    vals = {}
    for name in names:
        lo = hi = None
        if name == "rcu":
            b = rcu_exact(t, n, rate=R, step=step)
            v, lo, hi = b.value, b.lower, b.upper
        elif name == "rcus":
            b = rcus_exact(t, n, rate=R, s=s_eff, step=step)
            v, lo, hi = b.value, b.lower, b.upper
        elif name == "rcuss":
            b = _safe(lambda: rcuss_exact(t, n, rate=R, s=s_eff, step=step))
            v, lo, hi = (b, b, b) if isinstance(b, float) else (b.value, b.lower, b.upper)
        elif name == "rcus_hat":
            v = rcus_hat(t, n, rate=R, s=s_eff).value
        elif name == "rcuss_hat":
            v = _safe(lambda: rcuss_hat(t, n, rate=R, s=s_eff).value)
        elif name == "normal":
            v = normal_approx_pe(t, n, R)
        else:
            v = exponent_approx(t, n, R)
        vals[name] = (v, lo, hi)
    row = [rate_units, R * n / LN2]
    for name in names:
        v, lo, hi = vals[name]
        row += [v, _log10(v) if v == v else math.nan]
        if bracket and lo is not None:
            row += [lo, hi]
    return row


def _row_approx(rate_units, channel, units, n, s):
    t = load_config(channel)
    R = _from_units(rate_units, units)
    s_eff = exponent_s(t, R) if s is None else s
    p = rho_hat(make_family(t, s_eff), R, n)
    a = rcus_hat(t, n, rate=R, s=s_eff)
    b = _safe(lambda: rcuss_hat(t, n, rate=R, s=s_eff).value)
    decay = math.exp(-n * p.exponent)
    a_asym = _safe(lambda: exact_asymptotics_prefactor(p, "alpha"))
    b_asym = _safe(lambda: exact_asymptotics_prefactor(p, "beta"))
    nan = math.nan
    return [
        rate_units, s_eff, p.rho, p.c1, p.c2, p.c3 if p.c3 is not None else nan,
        p.psi if p.psi is not None else nan, p.lattice.kind, _to_units(p.exponent, units),
        a.prefactor, a.value, _log10(a.value), b, _log10(b) if b == b else nan,
        a_asym, a_asym * decay, b_asym, b_asym * decay,
    ]


def _eval_rcus(t, n, R, s=None, step=GRID_STEP):
    return rcus_exact(t, n, rate=R, s=s, step=step).value


def _eval_rcus_hat(t, n, R, s=None):
    return rcus_hat(t, n, rate=R, s=s).value


def _eval_rcuss_hat(t, n, R, s=None):
    return rcuss_hat(t, n, rate=R, s=s).value


def _eval_exponent(t, n, R):
    return exponent_approx(t, n, R)


def _row_invert(n, channel, units, eps, s, step):
    t = load_config(channel)
    n = int(n)
    tab = rcu_table(t, n, step=step)
    rcu_eval = lambda t_, n_, R: tab.evaluate(log_m_minus_one(n_ * R)).value
    row = [n]
    for ev in (
        rcu_eval,
        partial(_eval_rcus, s=s, step=step),
        partial(_eval_rcus_hat, s=s),
        partial(_eval_rcuss_hat, s=s),
        _eval_exponent,
    ):
        r = _safe(lambda: rate_for_epsilon(ev, t, n, eps))
        row.append(_to_units(r, units))
    row.append(_to_units(normal_approx_rate(t, n, eps), units))
    row.append(_to_units(normal_approx_rate(t, n, eps, with_log_term=True), units))
    return row


# ---------------------------------------------------------------- commands


def _fmt(v) -> str:
    if isinstance(v, (str, int, np.integer)):
        return str(v)
    return repr(float(v))


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _table(args) -> tuple[list[str], list[list], dict]:
    units = args.units
    channel = str(args.channel)
    notes = {}
    if args.command == "rates":
        t = load_config(channel)
        g, lm = gmi(t), lm_rate(t)
        header = ["gmi", "lm", "mi", "s_gmi", "s_lm"]
        row = [_to_units(g.value, units), _to_units(lm.value, units), _to_units(mutual_information(t), units), g.s_star, lm.s_star]
        if args.primal:
            header.append("lm_primal")
            row.append(_to_units(lm_primal_upper(t), units))
        return header, [row], notes
    if args.command == "exponents":
        grid = parse_grid(args.grid)
        header = ["rate", "er_iid", "er_cost1", "er_cost_prime", "er_cc"]
        rows = _map(partial(_row_exponents, channel=channel, units=units), list(grid), args.workers)
        return header, rows, notes
    if args.command == "bounds":
        grid = parse_grid(args.grid)
        names = [b.strip() for b in args.bounds.split(",")]
        bad = [b for b in names if b not in BOUND_NAMES]
        if bad:
            raise UsageError(f"unknown bounds: {', '.join(bad)}")
        t = load_config(channel)
        if not assumption_report(t).nonsingular:
            notes["rcuss"] = "singular triple: refined bounds unavailable, rcu equals rcus"
        header = ["rate", "log2_M"]
        for name in names:
            header += [name, f"log10_{name}"]
            if args.bracket and name in ("rcu", "rcus", "rcuss"):
                header += [f"{name}_lower", f"{name}_upper"]
        fn = partial(_row_bounds, channel=channel, units=units, n=_need(args.n, "--n"), s=_s_arg(args.s), step=args.delta_grid, bracket=args.bracket, names=names)
        return header, _map(fn, list(grid), args.workers), notes
    if args.command == "approx":
        grid = parse_grid(args.grid)
        header = [
            "rate", "s", "rho", "c1", "c2", "c3", "psi", "lattice", "exponent",
            "alpha_n", "rcus_hat", "log10_rcus_hat", "rcuss_hat", "log10_rcuss_hat",
            "alpha_asym", "rcus_asym", "beta_asym", "rcuss_asym",
        ]
        fn = partial(_row_approx, channel=channel, units=units, n=_need(args.n, "--n"), s=_s_arg(args.s))
        return header, _map(fn, list(grid), args.workers), notes
    if args.command == "invert":
        grid = parse_grid(args.grid, integer=True)
        header = ["n", "rcu", "rcus", "rcus_hat", "rcuss_hat", "exponent_approx", "normal", "normal_log"]
        fn = partial(_row_invert, channel=channel, units=units, eps=_need(args.eps, "--eps"), s=_s_arg(args.s), step=args.delta_grid)
        return header, _map(fn, [int(n) for n in grid], args.workers), notes
    if args.command == "simulate":
        t = load_config(channel)
        n, M = _need(args.n, "--n"), int(_need(args.M, "--M"))
        res = montecarlo_pe(t, n, M, args.trials, ensemble=args.ensemble, seed=args.seed)
        header = ["n", "M", "rate", "ensemble", "estimate", "ci95_lower", "ci95_upper", "sigma", "trials", "seed"]
        row = [n, M, _to_units(math.log(M) / n, units), args.ensemble, res.estimate, res.ci95[0], res.ci95[1], res.sigma, res.trials, res.seed]
        return header, [row], notes
    raise UsageError(f"unknown command {args.command!r}")


def _need(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required for this command")
    return value


def _validate_config(args) -> str:
    t = load_config(args.channel)
    rep = assumption_report(t)
    s = _s_arg(args.s)
    s = gmi(t).s_star if s is None else s
    s = s if s > 0 else 1.0
    lat = detect_lattice(make_family(t, s).values)
    lines = [
        f"inputs: {t.nx}, outputs: {t.ny}",
        f"regular: {str(rep.regular).lower()}",
        f"Y1: {list(rep.y1)}",
    ]
    if rep.nonsingular:
        lines.append(f"nonsingular: true, lattice: {str(lat.is_lattice).lower()}")
    else:
        lines.append("nonsingular: false; rcûss unavailable, rcu=rcus")
    lines.append(f"probe s: {s!r}" + (f", span: {lat.span!r}" if lat.is_lattice else ""))
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mismatch", description="Mismatched-decoding rates, exponents and finite-length bounds.")
    p.add_argument("command", choices=["rates", "exponents", "bounds", "approx", "invert", "simulate", "validate-config"])
    p.add_argument("--channel", required=True, type=Path, help="JSON config with W, q and Q")
    p.add_argument("--out", type=Path, help="CSV output path (stdout if omitted)")
    p.add_argument("--units", choices=["bits", "nats"], default="bits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--s", default="auto", help="metric exponent, or 'auto' for the exponent-optimal value")
    p.add_argument("--grid", default="0:0.5:0.05", help="START:STOP:STEP over rates (or n for invert)")
    p.add_argument("--eps", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=float)
    p.add_argument("--bracket", action="store_true", help="add lower/upper columns for exact bounds")
    p.add_argument("--delta-grid", type=float, default=GRID_STEP, help="grid step for non-lattice sums (nats)")
    p.add_argument("--bounds", default=",".join(BOUND_NAMES))
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--ensemble", choices=["iid", "cc"], default="iid")
    p.add_argument("--primal", action="store_true", help="also solve the primal LM problem")
    p.add_argument("--workers", type=int, default=1)
    return p


def _fail(exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split())
    print(json.dumps({"error": type(exc).__name__, "message": msg}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate-config":
        try:
            print(_validate_config(args))
            return 0
        except ConfigError as exc:
            return _fail(exc, 2)
        except Exception as exc:
            return _fail(exc, 1)
    start = time.perf_counter()
    out = args.out
    tmp = out.with_name(out.name + ".partial") if out else None
    try:
        header, rows, notes = _table(args)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        if out is None:
            sys.stdout.write(buf.getvalue())
            return 0
        tmp.write_text(buf.getvalue())
        os.replace(tmp, out)
        manifest = {
            "command": args.command,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "channel": str(args.channel),
            "config": json.loads(Path(args.channel).read_text()),
            "units": args.units,
            "seed": args.seed,
            "columns": header,
            "rows": len(rows),
            "notes": notes,
            "versions": {"mismatch": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
            "elapsed_seconds": round(time.perf_counter() - start, 3),
        }
        out.with_name(out.name + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return 0
    except ConfigError as exc:
        return _fail(exc, 2)
    except Exception as exc:
        return _fail(exc, 1)
    finally:
        if tmp is not None and tmp.exists():
            tmp.unlink()


if __name__ == "__main__":
    sys.exit(main())
