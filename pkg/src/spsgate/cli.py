"""Command line front end: ``spsgate <command> ...``.

Exit status is 0 on success, 1 for invalid input and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .detector import TimeTagFormatError
from .gate import QuadratureError, transmission_curve
from .scenario import (AnalysisParams, ScenarioError, analyze_file, load_scenario, rows_to_csv, run,
                       sweep)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

# flag -> scenario field path
RUN_OVERRIDES = {
    "seed": "seed",
    "n_periods": "pump.n_periods",
    "power_rel": "pump.power_rel",
    "rep_rate_hz": "pump.rep_rate_hz",
    "t_mod_ps": "gate.t_mod_ps",
    "bin_ps": "tcspc.bin_ps",
    "timetags": "outputs.timetags",
}


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _overrides(args) -> dict:
    found = {}
    for flag, path in RUN_OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            found[path] = value
    return found


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--n-periods", type=int)
    p.add_argument("--power-rel", type=float)
    p.add_argument("--rep-rate-hz", type=float)
    p.add_argument("--t-mod-ps", type=float)
    p.add_argument("--bin-ps", type=int)


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario, _overrides(args))
    report = run(sc, args.out_dir)
    _emit(_json(report), args.out)
    return EXIT_OK


def _parse_grid(text: str) -> list:
    items = [s.strip() for s in text.split(",") if s.strip()]
    out = []
    for s in items:
        try:
            out.append(float(s))
        except ValueError:
            out.append(s)
    return out


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario, _overrides(args))
    rows = sweep(args.kind.replace("-", "_"), sc, _parse_grid(args.grid), workers=args.workers,
                 compare_ungated=args.compare_ungated)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.scenario:
        sc = load_scenario(args.scenario)
        params = AnalysisParams.from_scenario(sc, args.g_star, args.g_star_sigma or 0.0)
    else:
        params = AnalysisParams()
    fields = {"kind": args.kind, "rep_rate_hz": args.rep_rate_hz, "bin_ps": args.bin_ps,
              "window_ps": args.window_ps, "n_side_peaks": args.n_side_peaks,
              "pulse_pattern": args.pulse_pattern, "dt_ps": args.dt_ps, "duration_ps": args.duration_ps,
              "delta_t_ps": args.delta_t_ps, "g_star": args.g_star, "g_star_sigma": args.g_star_sigma,
              "r1": args.r1, "r2": args.r2, "epsilon": args.epsilon, "lifetime": args.lifetime or None,
              "correct_overlap": False if args.no_overlap_correction else None}
    updates = {k: v for k, v in fields.items() if v is not None}
    params = replace(params, **updates)
    if params.bin_ps % 4:
        raise ValueError("--bin-ps must be a multiple of 4")
    if params.kind == "hom" and params.pulse_pattern != "pair":
        params = replace(params, pulse_pattern="pair", dt_ps=params.dt_ps or params.delta_t_ps)
    result = analyze_file(args.timetags, params)
    _emit(_json(result.report), args.out)
    if args.histogram:
        with open(args.histogram, "w", newline="") as fh:
            result.histogram.to_csv(fh)
    return EXIT_OK


def _grid(args) -> list[float]:
    if args.t_mod_ps:
        return args.t_mod_ps
    start, stop, step = args.t_mod_range
    if step <= 0 or stop < start:
        raise ValueError("--t-mod-range needs start <= stop and step > 0")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def cmd_eom_curve(args) -> int:
    curves = transmission_curve(args.t1_ps, _grid(args), args.insertion_loss_db)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t1_ps", "t_mod_ps", "f_max", "f_with_loss", "delay_ps"])
    for c in curves:
        for p in c.points:
            w.writerow([f"{c.t1_ps:.6g}", f"{p.t_mod_ps:.6g}", f"{p.f_max:.6g}",
                        f"{p.f_max_with_loss:.6g}", f"{p.optimal_delay_ps:.6g}"])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_cavity(args) -> int:
    if args.k is not None:
        if args.k < 0:
            raise ValueError("--k must be >= 0")
        t_dip = analysis.cavity_transmission(args.k)
        branch = "undercoupled" if args.k <= 1 else "overcoupled"
        rep = analysis.cavity_coupling(t_dip, branch)
    else:
        rep = analysis.cavity_coupling(args.t_dip, args.branch)
    _emit(rep.to_json(), args.out)
    return EXIT_OK


def cmd_brightness(args) -> int:
    if args.zeta is not None:
        zeta = args.zeta
    else:
        zeta = analysis.setup_efficiency(*args.zeta_factors)
    rep = analysis.brightness(args.i_sat_cps, args.rep_rate_hz, zeta, args.i_sat_std)
    _emit(rep.to_json(), args.out)
    return EXIT_OK


def cmd_invert_v(args) -> int:
    r = args.r
    t = 1.0 - r if args.t is None else args.t
    v, mb = analysis.invert_v(args.m, args.g_star, r, t, args.epsilon)
    vs = analysis.v_uncertainty(args.m, args.g_star, args.m_sigma, args.g_star_sigma, r, t, args.epsilon)
    _emit(_json({"m": args.m, "g_star": args.g_star, "v": v, "v_sigma": vs, "m_bound": mb,
                 "v_out_of_range": not 0 <= v <= 1}), args.out)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid input (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spsgate", description="Gated single-photon source simulator and analysis.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate a scenario and write its artifacts")
    p.add_argument("scenario")
    p.add_argument("--out-dir", default=".", help="directory for histogram, report and tag files")
    p.add_argument("--out", help="also write the report JSON here instead of stdout")
    p.add_argument("--timetags", help="file name (inside --out-dir) for the binary time tags")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a scenario over a parameter grid")
    p.add_argument("kind", choices=["power", "t-mod", "t_mod", "rep-rate", "rep_rate"])
    p.add_argument("scenario")
    p.add_argument("--grid", required=True, help="comma separated values; 'ungated' for no gate")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--compare-ungated", action="store_true",
                   help="also run each point without the gate on the same seed")
    p.add_argument("--out")
    _add_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="analyse a recorded time-tag file")
    p.add_argument("timetags")
    p.add_argument("--scenario", help="take analysis settings from this scenario file")
    p.add_argument("--kind", choices=["hbt", "hom"])
    p.add_argument("--rep-rate-hz", type=float)
    p.add_argument("--bin-ps", type=int)
    p.add_argument("--window-ps", type=float)
    p.add_argument("--n-side-peaks", type=int)
    p.add_argument("--pulse-pattern", choices=["single", "pair"])
    p.add_argument("--dt-ps", type=float)
    p.add_argument("--duration-ps", type=float)
    p.add_argument("--delta-t-ps", type=float)
    p.add_argument("--g-star", type=float)
    p.add_argument("--g-star-sigma", type=float)
    p.add_argument("--r1", type=float)
    p.add_argument("--r2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lifetime", action="store_true")
    p.add_argument("--no-overlap-correction", action="store_true")
    p.add_argument("--histogram", help="write the correlation histogram CSV here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eom-curve", help="gate transmission versus gate width")
    p.add_argument("--t1-ps", type=float, nargs="+", default=[625.0])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--t-mod-ps", type=float, nargs="+")
    g.add_argument("--t-mod-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--insertion-loss-db", type=float, default=1.9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eom_curve)

    p = sub.add_parser("cavity", help="coupling parameter and out-coupling from the transmission dip")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--t-dip", type=float)
    g.add_argument("--k", type=float)
    p.add_argument("--branch", choices=["undercoupled", "overcoupled"], default="undercoupled")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cavity)

    p = sub.add_parser("brightness", help="source efficiency from the saturated count rate")
    p.add_argument("--i-sat-cps", type=float, required=True)
    p.add_argument("--rep-rate-hz", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--zeta", type=float)
    g.add_argument("--zeta-factors", type=float, nargs="+")
    p.add_argument("--i-sat-std", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_brightness)

    p = sub.add_parser("invert-v", help="two-photon overlap from a measured peak ratio")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--g-star", type=float, required=True)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--t", type=float)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--m-sigma", type=float, default=0.0)
    p.add_argument("--g-star-sigma", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_invert_v)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for path, msg in exc.errors:
            print(f"error: {path}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (TimeTagFormatError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, QuadratureError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
