"""Command-line front end.

Subcommands:
  run <config.json>   execute a scenario config, write its CSV table
  list-scenarios      show available scenarios and their sweep keys
  waveform            export a sampled pulse table (t_us, omega_MHz, delta_MHz)
  landscape           shape-coefficient sensitivity/pulse-area grid
  avg-fidelity        open-system average gate fidelity without a config file

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .dynamics import IntegrationError
from .pulse import (
    OhqcParams,
    PulseSampleTable,
    QuadratureError,
    nhqc_waveform,
    ohqc_waveform,
)
from .scenarios import SCENARIOS, ConfigError, ScenarioConfig, run_scenario, \
    validate_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS = 0, 1, 2


def _add_common(parser):
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--threads", type=int, help="worker processes")
    parser.add_argument("--tol-scale", type=float, default=1.0,
                        help="multiply integrator tolerances by this factor")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hologate",
        description="holonomic multiqubit gate simulation scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="path to a JSON scenario config")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_common(p_run)

    sub.add_parser("list-scenarios", help="list scenarios")

    p_wave = sub.add_parser("waveform", help="export a pulse sample table")
    p_wave.add_argument("--pulse", choices=("ohqc", "nhqc"), default="ohqc")
    p_wave.add_argument("--a1", type=float, default=0.28)
    p_wave.add_argument("--a2", type=float, default=-0.12)
    p_wave.add_argument("--peak-MHz", type=float, default=1.0,
                        help="peak drive amplitude (ordinary MHz)")
    p_wave.add_argument("--points", type=int, default=1001)
    p_wave.add_argument("--out", required=True)

    p_land = sub.add_parser("landscape", help="shape-coefficient landscape")
    p_land.add_argument("--a1-min", type=float, default=-0.5)
    p_land.add_argument("--a1-max", type=float, default=0.5)
    p_land.add_argument("--a2-min", type=float, default=-0.5)
    p_land.add_argument("--a2-max", type=float, default=0.5)
    p_land.add_argument("--grid", type=int, default=21)
    _add_common(p_land)

    p_avg = sub.add_parser("avg-fidelity", help="average gate fidelity")
    p_avg.add_argument("--n-controls", type=int, nargs="+", default=[1])
    p_avg.add_argument("--gamma-over-pi", type=float, nargs="+", default=[1.0])
    p_avg.add_argument("--tau-us", type=float, default=400.0)
    p_avg.add_argument("--gamma-phi-kHz", type=float, default=1.0)
    p_avg.add_argument("--peak-MHz", type=float, default=2.85)
    p_avg.add_argument("--hamiltonian", choices=("effective", "full"),
                       default="effective")
    _add_common(p_avg)

    return parser


def _apply_overrides(data: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        data["threads"] = args.threads
    scale = getattr(args, "tol_scale", 1.0)
    if scale != 1.0:
        integ = dict(data.get("integrator") or {})
        integ["rel_tol"] = integ.get("rel_tol", 1e-7) * scale
        integ["abs_tol"] = integ.get("abs_tol", 1e-9) * scale
        data["integrator"] = integ
    if getattr(args, "out", None):
        data["output"] = args.out
    return data


def _emit(table, args) -> None:
    text = (table.to_json_text() + "\n") if getattr(args, "format", "csv") == "json" \
        else table.to_csv_text()
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name in sorted(SCENARIOS):
                spec = SCENARIOS[name]
                keys = ", ".join(sorted(spec.sweep_keys)) or "-"
                print(f"{name:24s} {spec.description}  [sweep: {keys}]")
            return EXIT_OK

        if args.command == "waveform":
            if args.pulse == "ohqc":
                params = OhqcParams.from_peak(args.a1, args.a2,
                                              2 * math.pi * args.peak_MHz)
                omega_fn, delta_fn = ohqc_waveform(params)
                gate_time = params.gate_time
            else:
                omega_fn, delta_fn, sched = nhqc_waveform(
                    2 * math.pi * args.peak_MHz, math.pi, 0.0)
                gate_time = sched.gate_time
            table = PulseSampleTable.sample(omega_fn, delta_fn, gate_time,
                                            args.points)
            table.to_csv(args.out)
            return EXIT_OK

        if args.command == "landscape":
            data = {
                "scenario": "pulse_landscape",
                "sweep": {
                    "a1": {"start": args.a1_min, "stop": args.a1_max,
                           "points": args.grid},
                    "a2": {"start": args.a2_min, "stop": args.a2_max,
                           "points": args.grid},
                },
            }
            data = _apply_overrides(data, args)
            table = run_scenario(data)
            if not data.get("output"):
                _emit(table, args)
            return EXIT_OK

        if args.command == "avg-fidelity":
            data = {
                "scenario": "avg_fidelity",
                "pulse": {"kind": "ohqc", "peak_MHz": args.peak_MHz},
                "noise": {"tau_us": args.tau_us,
                          "gamma_phi_kHz": args.gamma_phi_kHz},
                "hamiltonian": args.hamiltonian,
                "sweep": {"n_controls": args.n_controls,
                          "gamma_over_pi": args.gamma_over_pi},
            }
            data = _apply_overrides(data, args)
            table = run_scenario(data)
            if not data.get("output"):
                _emit(table, args)
            return EXIT_OK

        # run <config>
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        raw = _apply_overrides(raw, args)
        config, warnings = validate_config(raw)
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        table = run_scenario(config)
        if not config["output"]:
            _emit(table, args)
        return EXIT_OK

    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    raise SystemExit(main())
