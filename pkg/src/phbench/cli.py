"""Command-line entry point.

    phbench run --config step_arm [--out run.csv] [--window 0:0.25]
    phbench metrics --in run.csv --config step_arm [--out metrics.csv]
    phbench validate

Exit codes: 0 ok, 1 check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import csvio, metrics as mx
from .configs import load_scenario, recompute_metrics, resolve_config_path, write_metrics_csv
from .errors import PhbenchError
from .validate import run_validation

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2


def _parse_window(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"window must look like t0:t1, got {text!r}") from None


def _build_parser():
    p = argparse.ArgumentParser(prog="phbench",
                                description="impedance-control benchmark toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario config, write the CSV log")
    run_p.add_argument("--config", required=True,
                       help="scenario config path or bundled name")
    run_p.add_argument("--out", default=None, help="output CSV (default from config)")
    run_p.add_argument("--window", type=_parse_window, default=None,
                       help="RMS window t0:t1 for the summary (default 0:0.25)")

    met_p = sub.add_parser("metrics", help="recompute metrics from a CSV log")
    met_p.add_argument("--in", dest="infile", required=True, help="input CSV log")
    met_p.add_argument("--config", required=True,
                       help="scenario config that produced the log")
    met_p.add_argument("--out", default=None,
                       help="output metrics CSV (default <in>.metrics.csv)")
    met_p.add_argument("--window", type=_parse_window, default=None,
                       help="RMS window t0:t1 for the summary")

    sub.add_parser("validate", help="run the built-in invariant suite")
    return p


def cmd_run(args) -> int:
    try:
        path = resolve_config_path(args.config)
        cfg = load_scenario(path)
    except (FileNotFoundError, PhbenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.window is not None:
        from dataclasses import replace
        cfg.sim = replace(cfg.sim, rms_window=args.window)
    try:
        traj = cfg.run()
    except PhbenchError as exc:
        print(f"error: scenario failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILURE
    out = args.out or cfg.output
    csvio.write_trajectory(out, traj)
    s = traj.summary()
    w0, w1 = s["rms_window_s"]
    print(f"wrote {out} ({len(traj.t)} rows)")
    print(f"RMS e_step over [{w0:g}, {w1:g}] s: {s['rms_e_step_W']:.17g} W")
    print(f"min quasi-static passivity margin: {s['min_margin_qs_J']:.17g} J")
    print(f"peak impedance energy: {s['peak_H_omega_J']:.17g} J")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        path = resolve_config_path(args.config)
        cfg = load_scenario(path)
    except (FileNotFoundError, PhbenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        log = csvio.read_log(args.infile)
    except FileNotFoundError:
        print(f"error: no such log: {args.infile}", file=sys.stderr)
        return EXIT_USAGE
    except PhbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        metrics = recompute_metrics(log, cfg)
    except PhbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or f"{args.infile.removesuffix('.csv')}.metrics.csv"
    write_metrics_csv(out, metrics)
    window = args.window or cfg.sim.rms_window
    t = metrics["t_s"]
    w1 = min(window[1], float(t[-1]))
    rms = mx.rms_over_window(t, metrics["e_step_W"], window[0], w1)
    print(f"wrote {out} ({len(t)} rows)")
    print(f"RMS e_step over [{window[0]:g}, {w1:g}] s: {rms:.17g} W")
    print(f"min quasi-static passivity margin: {np.min(metrics['margin_qs_J']):.17g} J")
    print(f"peak impedance energy: {np.max(metrics['H_Omega_J']):.17g} J")
    return EXIT_OK


def cmd_validate(_args) -> int:
    ok = run_validation()
    print("validation:", "all checks passed" if ok else "FAILURES detected")
    return EXIT_OK if ok else EXIT_CHECK_FAILURE


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    handler = {"run": cmd_run, "metrics": cmd_metrics, "validate": cmd_validate}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
