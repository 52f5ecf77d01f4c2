"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import spectral as spc
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, resolve, validate_config
from .runner import FREQ_COL, InvariantError, read_trace_csv, run_experiment, write_csv, write_json

log = logging.getLogger("nvnmr")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4

_DEFAULT_QUANTUM = {
    "kind": "quantum",
    "protocol": {"g": 0.5, "tau": 0.1, "delta1": float(2 * 3.141592653589793 * 0.71),
                 "delta2": float(2 * 3.141592653589793 * 0.74), "n_shots": 400},
    "analysis": {"couplings": [1.0, 1.0], "reset": "expectation"},
}


def _load_raw(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def cmd_simulate(args):
    cfg = load_config(args.config, args.preset, args.seed)
    summary = run_experiment(cfg, args.out)
    print(json.dumps(summary["results"], sort_keys=True, indent=2))


def cmd_fft(args):
    raw = _load_raw(args.config)
    source = raw.get("analysis", {}).get("input_trace")
    if source is None:
        cfg = load_config(args.config, args.preset, args.seed)
        if cfg.kind != "trace":
            raise ConfigError(f"fft works on single traces; kind {cfg.kind!r} is not one")
        summary = run_experiment(cfg, args.out)
        print(json.dumps(summary["results"], sort_keys=True, indent=2))
        return
    analysis = raw["analysis"]
    trace = read_trace_csv(source, analysis.get("tau"))
    spec = spc.compute_spectrum(trace, window=analysis.get("window", "boxcar"),
                                detrend=analysis.get("detrend", True))
    beat = analysis.get("beat")
    if beat is not None:
        report = spc.detect_harmonics(spec, float(beat), int(analysis.get("max_harmonic", 4)))
    else:
        report = spc.PeakReport(spc.find_peaks(spec))
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "spectrum.csv"), [FREQ_COL, "magnitude [probability]"],
              [spec.freqs, spec.mags])
    write_json(os.path.join(args.out, "peaks.json"), report.to_dict())
    print(json.dumps(report.to_dict()["peaks"][:3], sort_keys=True, indent=2))


def _forced(kind, default=None):
    def run(args):
        raw = _load_raw(args.config)
        if not raw and args.preset is None:
            if default is None:
                raise ConfigError(f"need --config or --preset; available presets: {sorted(PRESETS)}")
            raw = default
        cfg = ExperimentConfig.from_dict(resolve(raw, args.preset, args.seed))
        if cfg.kind != kind:
            raise ConfigError(f"this subcommand runs kind {kind!r}, config has {cfg.kind!r}")
        summary = run_experiment(cfg, args.out)
        print(json.dumps(summary["results"], sort_keys=True, indent=2))
    return run


def cmd_validate(args):
    raw = _load_raw(args.config)
    if args.preset is not None:
        raw["preset"] = args.preset
    if args.seed is not None:
        raw["seed"] = args.seed
    report = validate_config(raw)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "validation.json"), report)
    print(json.dumps(report, sort_keys=True, indent=2))
    if not report["ok"]:
        raise SystemExit(EXIT_CONFIG)


COMMANDS = {
    "simulate": (cmd_simulate, "run a configured experiment and write its bundle"),
    "fft": (cmd_fft, "spectrum and peak report of a simulated or stored trace"),
    "fisher": (_forced("fisher"), "Fisher information and scaling fits"),
    "quantum": (_forced("quantum", _DEFAULT_QUANTUM), "exact spin evolution with back-action"),
    "validate": (cmd_validate, "check a config without running it"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvnmr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=None if name == "validate" else "out",
                       help="output directory")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvariantError, FloatingPointError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
