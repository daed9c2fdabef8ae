"""Command-line front end.

Exit status: 0 on success, 2 on usage errors (bad flags, unknown example id,
bad ``--set``), 1 when the analysis itself fails (diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from . import export
from .catalog import FAIL, run_entry, load_catalog
from .converter import build_example
from .converter.io import load_model
from .errors import BifscopeError
from .freqplots import bode_plot, classify, f_plot, nyquist_plot
from .sampled import build, pole_report
from .simulate import detect_period, simulate
from .steady_state import find_operating_points, make_operating_point, switch_on_fraction
from .sweep import duty_sweep, sweep


class UsageError(Exception):
    pass


# argument parsing ------------------------------------------------------------------

def _model_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", type=int, metavar="N", help="catalog example id (1..9)")
    src.add_argument("--model", metavar="FILE", help="model description JSON file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a template parameter (repeatable)")
    p.add_argument("--op", type=int, default=None, metavar="K",
                   help="operating point index (sorted by D); default all for reports, 0 for curves")
    p.add_argument("--duty", type=float, default=None, metavar="D",
                   help="analyse the orbit with this duty instead of solving for it")


def _out_args(p, default_format):
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bifscope", description="Sampled-data stability and bifurcation "
                                     "analysis of PWM DC-DC converters.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="bifurcation report for each operating point")
    _model_args(p)
    p.add_argument("--out", metavar="PATH", help="also write the JSON report here")
    p.add_argument("--format", choices=("text", "json"), default="text")

    for name, helptext in (("fplot", "F-plot F(theta) = M(e^{i theta})"),
                           ("nyquist", "discrete-time Nyquist curve N(e^{i theta})")):
        p = sub.add_parser(name, help=helptext)
        _model_args(p)
        _out_args(p, "csv")
        p.add_argument("--full", action="store_true", help="theta in [-pi, pi] instead of [0, pi]")
        p.add_argument("--n", type=int, default=2048, help="initial samples before refinement")

    p = sub.add_parser("bode", help="Bode magnitude/phase of the loop gain up to omega_s/2")
    _model_args(p)
    _out_args(p, "csv")
    p.add_argument("--n", type=int, default=2048, help="number of frequencies")

    p = sub.add_parser("poles", help="sampled-data poles")
    _model_args(p)
    _out_args(p, "json")

    p = sub.add_parser("simulate", help="exact switched simulation")
    _model_args(p)
    _out_args(p, "csv")
    p.add_argument("--cycles", type=int, default=200)
    p.add_argument("--x0", metavar="V1,V2,...", help="initial state (default: orbit start + perturbation)")
    p.add_argument("--perturb", type=float, default=0.01, help="relative perturbation of the orbit start")
    p.add_argument("--samples", type=int, default=32, help="samples per cycle")
    p.add_argument("--every", type=int, default=1, help="write every k-th sample")
    p.add_argument("--tail", type=int, default=64, help="cycles used by the period detector")

    p = sub.add_parser("sweep", help="one-parameter sweep with bifurcation refinement")
    _model_args(p)
    p.add_argument("--param", required=True)
    p.add_argument("--range", required=True, metavar="LO:HI")
    p.add_argument("--n", type=int, default=101)
    p.add_argument("--by-duty", action="store_true",
                   help="walk the duty cycle over LO:HI and solve for the parameter")
    p.add_argument("--out", metavar="PATH", help="JSON summary (default stdout)")
    p.add_argument("--csv", metavar="PATH", help="long-format pole table")

    p = sub.add_parser("catalog", help="run the worked examples against their expected values")
    p.add_argument("ids", nargs="*", type=int, help="example ids (default all)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--strict", action="store_true", help="exit 1 if any check fails")
    return parser


# helpers ----------------------------------------------------------------------------

def _parse_sets(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"--set value for {k!r} is not a number: {v!r}") from None
    return out


def _load(args):
    sets = _parse_sets(args.set)
    if args.example is not None:
        if args.example not in range(1, 10):
            raise UsageError(f"unknown example id {args.example}; valid ids are 1..9")
        try:
            return build_example(args.example, **sets)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    model = load_model(args.model)
    if sets:
        try:
            model = model.with_params(**sets)
        except (KeyError, ValueError) as exc:
            raise UsageError(str(exc.args[0])) from None
    return model


def _operating_points(model, args):
    if args.duty is not None:
        if not 0 < args.duty < 1:
            raise UsageError("--duty must lie in (0, 1)")
        ops = [make_operating_point(model, args.duty)]
    else:
        ops = find_operating_points(model)
    if not ops:
        raise BifscopeError("no T-periodic operating point found (saturated or no solution)")
    if args.op is not None:
        if not 0 <= args.op < len(ops):
            raise UsageError(f"--op {args.op} out of range; {len(ops)} operating point(s)")
        return [ops[args.op]]
    return ops


@contextmanager
def _sink(path):
    if path:
        with open(path, "w", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _fmt_pole(z):
    return f"{z.real:+.6f}{z.imag:+.6f}j (|z|={abs(z):.6f})"


# commands ---------------------------------------------------------------------------

def cmd_analyze(args):
    model = _load(args)
    ops = _operating_points(model, args)
    reports = []
    for k, op in enumerate(ops):
        sd = build(model, op)
        rep = classify(sd)
        bode = bode_plot(sd)
        reports.append((k, op, rep, bode))
    payload = {
        "model": model.label or model.template or "custom",
        "m_a": model.m_a,
        "operating_points": [
            {"index": k, "D": op.D, "switch_on_fraction": switch_on_fraction(model, op), "period": op.period,
             "x0": op.x0_start.tolist(), "report": export.report_json(rep),
             "gain_margin_db": bode.gain_margin_db, "phase_margin_deg": bode.phase_margin_deg}
            for k, op, rep, bode in reports
        ],
    }
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(export.dumps(payload) + "\n")
    if args.format == "json":
        print(export.dumps(payload))
        return 0
    print(f"model: {payload['model']}   m_a = {model.m_a:.6g} V/s   T = {model.ramp.T:.6g} s")
    for k, op, rep, bode in reports:
        verdict = "stable" if rep.stable else "UNSTABLE"
        print(f"\noperating point {k}: D = {op.D:.6f} (switch on {switch_on_fraction(model, op):.6f}), "
              f"period {op.period:.6g} s")
        print(f"  verdict: {verdict}   class: {rep.bif_class or '-'}   nearest type: {rep.near_class or '-'}")
        print(f"  encirclements: F-plot {rep.encirclements}, Nyquist {rep.nyquist_encirclements}, "
              f"poles outside {rep.n_outside}{'' if rep.consistent else '  (INCONSISTENT)'}")
        print("  poles: " + ", ".join(_fmt_pole(z) for z in rep.poles))
        print(f"  F(0) = {rep.F0:.6g}   F(pi) = {rep.Fpi:.6g}   closest approach to m_a at theta = "
              f"{rep.theta_critical:.4f} ({rep.curve_class}), distance {rep.distance_to_critical:.6g}")
        if rep.predicted_oscillation_rad_s:
            print(f"  predicted oscillation: {rep.predicted_oscillation_rad_s:.6g} rad/s")
        gm, pm = bode.gain_margin_db, bode.phase_margin_deg
        print(f"  gain margin: {'-' if gm is None else f'{gm:.4f} dB'}   "
              f"phase margin: {'-' if pm is None else f'{pm:.2f} deg'}")
        if rep.suggested_m_a is not None:
            print(f"  suggested m_a >= {rep.suggested_m_a:.6g} V/s to remove the period doubling")
    return 0


def _single_op(model, args):
    if args.op is None:
        args.op = 0
    return _operating_points(model, args)[0]


def cmd_curve(args):
    model = _load(args)
    sd = build(model, _single_op(model, args))
    make = f_plot if args.command == "fplot" else nyquist_plot
    curve = make(sd, half=not args.full, n0=args.n)
    with _sink(args.out) as fh:
        if args.format == "csv":
            export.curve_csv(curve, fh, "theta")
        else:
            fh.write(export.dumps(export.curve_json(curve)) + "\n")
    return 0


def cmd_bode(args):
    model = _load(args)
    sd = build(model, _single_op(model, args))
    bode = bode_plot(sd, n_points=args.n)
    with _sink(args.out) as fh:
        if args.format == "csv":
            export.bode_csv(bode, fh)
        else:
            fh.write(export.dumps(export.bode_json(bode)) + "\n")
    return 0


def cmd_poles(args):
    model = _load(args)
    ops = _operating_points(model, args)
    rows = []
    for k, op in enumerate(ops):
        pr = pole_report(build(model, op))
        rows.append({"index": k, "D": op.D, "stable": pr.stable, "n_outside": pr.n_outside,
                     "poles": [[float(z.real), float(z.imag)] for z in pr.poles]})
    with _sink(args.out) as fh:
        if args.format == "json":
            fh.write(export.dumps(rows) + "\n")
        else:
            fh.write("op,D,pole_re,pole_im,modulus\n")
            for r in rows:
                for re_, im_ in r["poles"]:
                    fh.write(f"{r['index']},{export.fmt(r['D'])},{export.fmt(re_)},{export.fmt(im_)},"
                             f"{export.fmt(abs(complex(re_, im_)))}\n")
    return 0


def cmd_simulate(args):
    model = _load(args)
    if args.x0:
        try:
            x0 = np.array([float(v) for v in args.x0.split(",")])
        except ValueError:
            raise UsageError(f"--x0 expects comma-separated numbers, got {args.x0!r}") from None
    else:
        x0 = _single_op(model, args).x0_start * (1 + args.perturb)
    if args.cycles < 1:
        raise UsageError("--cycles must be at least 1")
    trace = simulate(model, x0, args.cycles, samples_per_cycle=args.samples)
    try:
        verdict = str(detect_period(trace, min(args.tail, max(trace.n_cycles - 8, 1))))
    except BifscopeError as exc:
        verdict = f"undetermined ({exc})"
    if args.format == "csv":
        trace.to_csv(args.out or sys.stdout, model.system.state_names, args.every)
    else:
        payload = {"verdict": verdict, "cycles": trace.n_cycles, "diverged": trace.diverged,
                   "strobe_times": trace.strobe_times.tolist(), "strobe_states": trace.strobe_states.tolist(),
                   "duties": trace.duties.tolist()}
        with _sink(args.out) as fh:
            fh.write(export.dumps(payload) + "\n")
    print(f"behaviour: {verdict}", file=sys.stderr)
    return 0


def cmd_sweep(args):
    model = _load(args)
    try:
        lo, hi = (float(v) for v in args.range.split(":"))
    except ValueError:
        raise UsageError(f"--range expects LO:HI, got {args.range!r}") from None
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if model.template is None or args.param not in model.params:
        raise UsageError(f"model has no parameter {args.param!r}")
    if args.by_duty:
        res = duty_sweep(model, args.param, lo, hi, args.n)
        summary = res.summary()
    else:
        res = sweep(model, args.param, lo, hi, args.n)
        summary = res.summary()
        if args.csv:
            res.to_csv(args.csv)
    with _sink(args.out) as fh:
        fh.write(export.dumps(summary) + "\n")
    return 0


def cmd_catalog(args):
    ids = args.ids or sorted(load_catalog())
    for i in ids:
        if i not in range(1, 10):
            raise UsageError(f"unknown example id {i}; valid ids are 1..9")
    reports = [run_entry(i) for i in ids]
    if args.format == "json":
        text = export.dumps([r.to_dict() for r in reports])
    else:
        text = "\n\n".join(r.table() for r in reports)
    with _sink(args.out) as fh:
        fh.write(text + "\n")
    failed = any(c.status == FAIL for r in reports for c in r.checks)
    return 1 if (args.strict and failed) else 0


COMMANDS = {
    "analyze": cmd_analyze, "fplot": cmd_curve, "nyquist": cmd_curve, "bode": cmd_bode, "poles": cmd_poles,
    "simulate": cmd_simulate, "sweep": cmd_sweep, "catalog": cmd_catalog,
}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`)
        sys.stdout = open(os.devnull, "w")
        return 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bifscope: error: {exc}", file=sys.stderr)
        return 2
    except (BifscopeError, ValueError, np.linalg.LinAlgError, OSError) as exc:
        print(f"bifscope: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
