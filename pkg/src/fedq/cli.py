"""Command-line front end.

    fedq run --preset fig3 --out fig3.csv --seed 42 [--channel-samples N]
             [--mode analytic|simulate] [--workers W]
    fedq optimize --config scenario.json [--out curve.csv]
             [--override key=value ...] [--seed S] [--channel-samples N]

Exit codes: 0 success, 2 configuration or I/O error, 3 infeasible learning
parameters.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .analysis import FeasibilityError, LearningParams, Scenario, optimize_precision
from .chipenergy import ChipProfile
from .presets import (ConfigError, PRESET_NAMES, preset, run_sweep,
                      SIMULATE_COLUMNS, SWEEP_COLUMNS, write_rows)
from .qnn import NetworkArch
from .radio import RadioParams

# Flat JSON schema for `fedq optimize`, with the standard defaults.
SCENARIO_DEFAULTS = {
    "num_devices": 50,
    "cohort_size": 30,
    "local_steps": 5,
    "smoothness": 1.0,
    "strong_convexity": 1.0,
    "grad_bound": 0.2,
    "noise_std": 1.0,
    "lr_beta": 5.0,
    "lr_gamma": 1.0,
    "accuracy_target": 0.01,
    "n_mac": 20_640_000,
    "n_weights": 180_000,
    "n_outputs": 1354,
    "mac_energy_pj": 3.7,
    "mac_exponent": 1.25,
    "mac_array": 64,
    "n_max": 32,
    "tx_power_w": 0.1,
    "bandwidth_hz": 1e7,
    "noise_psd_w_per_hz": 1e-13,
    "area_side_m": 100.0,
    "pathloss_exponent": 2.0,
    "channel_samples": 10_000,
    "seed": 0,
}


def scenario_from_flat(values: dict) -> Scenario:
    """Build a scenario from the flat key/value schema above."""
    unknown = set(values) - set(SCENARIO_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(SCENARIO_DEFAULTS)
    merged.update(values)
    try:
        learning = LearningParams(
            smoothness=float(merged["smoothness"]),
            strong_convexity=float(merged["strong_convexity"]),
            grad_bound=float(merged["grad_bound"]),
            noise_std=np.asarray(merged["noise_std"], dtype=float),
            lr_beta=float(merged["lr_beta"]),
            lr_gamma=float(merged["lr_gamma"]),
            accuracy_target=float(merged["accuracy_target"]),
            local_steps=int(merged["local_steps"]),
            cohort_size=int(merged["cohort_size"]),
            num_devices=int(merged["num_devices"]),
        )
        arch = NetworkArch(n_mac=int(merged["n_mac"]),
                           n_weights=int(merged["n_weights"]),
                           n_outputs=int(merged["n_outputs"]))
        chip = ChipProfile.from_picojoules(float(merged["mac_energy_pj"]),
                                           exponent=float(merged["mac_exponent"]),
                                           array_size=int(merged["mac_array"]),
                                           n_max=int(merged["n_max"]))
        radio = RadioParams(tx_power=float(merged["tx_power_w"]),
                            bandwidth=float(merged["bandwidth_hz"]),
                            noise_psd=float(merged["noise_psd_w_per_hz"]),
                            area_side=float(merged["area_side_m"]),
                            pathloss_exponent=float(merged["pathloss_exponent"]))
        return Scenario(learning=learning, arch=arch, chip=chip, radio=radio,
                        channel_samples=int(merged["channel_samples"]),
                        seed=int(merged["seed"]))
    except FeasibilityError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_scenario_json(path, overrides: dict | None = None) -> Scenario:
    try:
        with open(path) as handle:
            values = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    if overrides:
        values.update(overrides)
    return scenario_from_flat(values)


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedq",
                                     description="Energy-aware quantized federated "
                                                 "learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named preset sweep and write a CSV")
    run.add_argument("--preset", required=True, metavar="NAME",
                     help=f"one of: {', '.join(PRESET_NAMES)}")
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--seed", type=int, default=None,
                     help="master seed (required in simulate mode, default 0)")
    run.add_argument("--channel-samples", type=int, default=None,
                     help="Monte-Carlo channel draws (default 10000)")
    run.add_argument("--mode", choices=("analytic", "simulate"), default=None,
                     help="override the preset's mode")
    run.add_argument("--workers", type=int, default=None,
                     help="device-training threads in simulate mode")

    opt = sub.add_parser("optimize", help="optimize precision for a JSON scenario")
    opt.add_argument("--config", required=True, help="flat JSON scenario file")
    opt.add_argument("--out", default=None, help="write the energy curve CSV here")
    opt.add_argument("--seed", type=int, default=None)
    opt.add_argument("--channel-samples", type=int, default=None)
    opt.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    return parser


def _cmd_run(args) -> int:
    config = preset(args.preset,
                    seed=0 if args.seed is None else args.seed,
                    channel_samples=args.channel_samples or 10_000)
    if args.mode is not None:
        config = dataclasses.replace(config, mode=args.mode)
    if config.mode == "simulate" and args.seed is None:
        raise ConfigError("--seed is required in simulate mode")
    if args.workers is not None and config.sim is not None:
        config = dataclasses.replace(
            config, sim=dataclasses.replace(config.sim, workers=args.workers))
    rows = run_sweep(config, out_path=args.out)
    print(f"wrote {len(rows)} rows to {args.out} "
          f"(preset {args.preset}, mode {config.mode}, seed {config.seed})")
    return 0


def _cmd_optimize(args) -> int:
    overrides = dict(_parse_override(item) for item in args.override)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.channel_samples is not None:
        overrides["channel_samples"] = args.channel_samples
    scenario = load_scenario_json(args.config, overrides)
    search = optimize_precision(scenario)
    print(f"n_star = {search.n_star}")
    print(f"expected_total_energy_j = {search.minimum!r}")
    print(f"relaxed_minimizer = {search.relaxed_n:.4f}")
    if args.out is not None:
        rows = [{"n": n, "f_E_joules": value} for n, value in search.curve]
        write_rows(rows, ("n", "f_E_joules"), args.out)
        print(f"wrote curve to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_optimize(args)
    except FeasibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
