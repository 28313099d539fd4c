"""Command line: coverage and gain sweeps, deployment dumps, validation.

Thresholds are given in dB here and converted to linear once, before any
analysis or simulation call. Settings come from built-in defaults, then an
optional INI file (``--config``), then flags; later sources win.

Exit codes: 0 success, 1 invalid input or failed validation, 2 numerical
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from dataclasses import dataclass

import numpy as np

from nsnr.analysis import (
    average_rate_roundrobin,
    average_rate_scheduled,
    coverage_mode_approximation,
    coverage_probability,
    coverage_special_case,
)
from nsnr.errors import ConfigError, DomainError, NumericalFailure
from nsnr.model import NetworkConfig, Scenario
from nsnr.montecarlo import Scheduler, run_paired_trials, sample_realization, write_realization_csv
from nsnr import validation

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

METHODS = ("general", "special", "approx", "montecarlo")
DEFAULT_THETA_DB = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
DEFAULT_RATIOS = (1.0, 2.0, 5.0, 10.0, 20.0)

COVERAGE_COLUMNS = ("theta_db", "ratio", "pc_general", "pc_special", "pc_approx", "pc_mc", "pc_mc_ci_halfwidth")
GAIN_COLUMNS = ("ratio", "scenario", "tau_s", "tau_r", "gain", "gain_mc", "gain_mc_ci_halfwidth")


@dataclass(frozen=True)
class SweepSpec:
    theta_db: tuple = DEFAULT_THETA_DB
    ratios: tuple = DEFAULT_RATIOS
    scenario: Scenario = Scenario.ALL_BS_ACTIVE
    methods: tuple = METHODS
    trials: int = 100_000
    seed: int = 42
    output_path: str = "-"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if not self.theta_db:
            raise ConfigError("theta grid is empty; pass e.g. --theta-db -10,0,10")
        if not self.ratios:
            raise ConfigError("ratio grid is empty; pass e.g. --ratios 1,5,10")
        if any(not r > 0 for r in self.ratios):
            raise ConfigError(f"density ratios must be > 0, got {list(self.ratios)}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")
        if not self.methods:
            raise ConfigError("no methods selected")
        if "montecarlo" in self.methods and self.trials < 1:
            raise ConfigError(f"--trials must be >= 1 for montecarlo, got {self.trials}")
        if self.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {self.workers}")


def parse_float_list(text) -> tuple:
    try:
        values = tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None
    return values


def parse_methods(text) -> tuple:
    return tuple(m.strip().lower() for m in str(text).split(",") if m.strip())


# --- config file ----------------------------------------------------------

_NETWORK_KEYS = {"lambda_b": float, "lambda_u": float, "power": float, "noise": float, "alpha": float}


def load_config(path):
    """Read an INI file into (network overrides, sweep overrides)."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    net, sweep = {}, {}
    if parser.has_section("network"):
        for key, value in parser.items("network"):
            if key == "scenario":
                net["scenario"] = Scenario.parse(value)
            elif key in _NETWORK_KEYS:
                net[key] = _convert(value, float, key)
            else:
                raise ConfigError(f"unknown key {key!r} in [network] of {path}")
    if parser.has_section("sweep"):
        for key, value in parser.items("sweep"):
            if key == "theta_db":
                sweep["theta_db"] = parse_float_list(value)
            elif key == "ratios":
                sweep["ratios"] = parse_float_list(value)
            elif key == "methods":
                sweep["methods"] = parse_methods(value)
            elif key in ("trials", "seed", "workers"):
                sweep[key] = _convert(value, int, key)
            elif key in ("out", "output_path"):
                sweep["output_path"] = value
            elif key == "scenario":
                sweep["scenario"] = Scenario.parse(value)
            else:
                raise ConfigError(f"unknown key {key!r} in [sweep] of {path}")
    extra = [s for s in parser.sections() if s not in ("network", "sweep")]
    if extra:
        raise ConfigError(f"unknown section(s) {extra} in {path}; expected [network] and [sweep]")
    return net, sweep


def _convert(value, kind, key):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}") from None


def dump_config(cfg: NetworkConfig, spec: SweepSpec) -> str:
    parser = configparser.ConfigParser()
    parser["network"] = {
        "lambda_b": repr(cfg.lambda_b),
        "lambda_u": repr(cfg.lambda_u),
        "power": repr(cfg.power),
        "noise": repr(cfg.noise),
        "alpha": repr(cfg.alpha),
        "scenario": str(int(cfg.scenario)),
    }
    parser["sweep"] = {
        "theta_db": ", ".join(repr(t) for t in spec.theta_db),
        "ratios": ", ".join(repr(r) for r in spec.ratios),
        "scenario": str(int(spec.scenario)),
        "methods": ", ".join(spec.methods),
        "trials": str(spec.trials),
        "seed": str(spec.seed),
        "workers": str(spec.workers),
        "output_path": spec.output_path,
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# --- argument handling ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [network] and [sweep] sections")
    common.add_argument("--theta-db", help="comma-separated SINR thresholds in dB")
    common.add_argument("--ratios", help="comma-separated user-to-BS density ratios")
    common.add_argument("--scenario", help="1: all BSs transmit, 2: only BSs with users")
    common.add_argument("--methods", help="subset of general,special,approx,montecarlo")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per ratio")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--out", help="output CSV path, '-' for stdout")
    common.add_argument("--alpha", type=float, help="path-loss exponent (> 2)")
    common.add_argument("--noise", type=float, help="noise power")
    common.add_argument("--power", type=float, help="BS transmit power")
    common.add_argument("--lambda-b", type=float, dest="lambda_b", help="BS density")
    common.add_argument("--workers", type=int, help="processes for Monte Carlo batches")

    parser = argparse.ArgumentParser(prog="nsnr", description="Normalized-SNR scheduling in PPP downlink networks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("coverage", parents=[common], help="coverage probability sweep over theta and ratio")
    sub.add_parser("gain", parents=[common], help="average rates and scheduling gain per ratio")
    sub.add_parser("deployment", parents=[common], help="dump one sampled network as CSV")
    sub.add_parser("validate", parents=[common], help="run the analysis-vs-simulation checks")
    return parser


def resolve(args, command_defaults=None):
    """Merge defaults, config file and flags into (NetworkConfig, SweepSpec, explicit keys)."""
    net, sweep = {}, dict(command_defaults or {})
    explicit = set()
    if args.config:
        file_net, file_sweep = load_config(args.config)
        net.update(file_net)
        sweep.update(file_sweep)
        explicit.update(file_sweep)
    for key in ("alpha", "noise", "power", "lambda_b"):
        value = getattr(args, key)
        if value is not None:
            net[key] = value
    if args.theta_db is not None:
        sweep["theta_db"] = parse_float_list(args.theta_db)
    if args.ratios is not None:
        sweep["ratios"] = parse_float_list(args.ratios)
    if args.methods is not None:
        sweep["methods"] = parse_methods(args.methods)
    if args.scenario is not None:
        sweep["scenario"] = Scenario.parse(args.scenario)
    for key in ("trials", "seed", "workers"):
        if getattr(args, key) is not None:
            sweep[key] = getattr(args, key)
    if args.out is not None:
        sweep["output_path"] = args.out
    explicit.update(k for k in ("ratios", "scenario", "methods", "theta_db") if getattr(args, k) is not None)

    if "scenario" in sweep:
        net["scenario"] = sweep["scenario"]
    elif "scenario" in net:
        sweep["scenario"] = net["scenario"]
    cfg = NetworkConfig(**net)
    spec = SweepSpec(**sweep)
    return cfg, spec, explicit


def _fmt(value):
    return "" if value is None else repr(float(value))


def _open_out(path):
    if path in ("-", ""):
        return None
    return open(path, "w", newline="")


def _write_csv(path, header, rows):
    fh = _open_out(path)
    try:
        writer = csv.writer(fh or sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not None:
            fh.close()


def coverage_rows(cfg: NetworkConfig, spec: SweepSpec):
    thetas = [validation.db_to_linear(t) for t in spec.theta_db]
    closed_form = cfg.alpha == 4.0 and cfg.noiseless
    rows = []
    for ratio in sorted(spec.ratios):
        cell = cfg.with_ratio(ratio)
        mc = None
        if "montecarlo" in spec.methods:
            mc = run_paired_trials(cell, thetas, spec.trials, spec.seed, workers=spec.workers)[Scheduler.NORMALIZED_SNR]
            pc_mc, hw = mc.coverage(), mc.coverage_halfwidth()
        order = np.argsort(spec.theta_db, kind="stable")
        for i in order:
            theta = thetas[i]
            general = coverage_probability(theta, cell).probability if "general" in spec.methods else None
            special = approx = None
            if closed_form and "special" in spec.methods:
                special = coverage_special_case(theta, ratio, cfg.scenario).probability
            if closed_form and "approx" in spec.methods and float(ratio) == int(ratio):
                approx = coverage_mode_approximation(theta, int(ratio), cfg.scenario).probability
            rows.append(
                [
                    repr(float(spec.theta_db[i])),
                    repr(float(ratio)),
                    _fmt(general),
                    _fmt(special),
                    _fmt(approx),
                    _fmt(pc_mc[i] if mc is not None else None),
                    _fmt(hw[i] if mc is not None else None),
                ]
            )
    return rows


def _gain_ci(ns, rr):
    """Delta-method 95% half-width for the ratio of two paired means.

    The per-trial covariance is not stored, so the errors of the two means
    are combined as if independent. Both means come from the same draws and
    are positively correlated, so this overstates the width.
    """
    g = ns.rate_mean() / rr.rate_mean()
    rel = np.hypot(ns.rate_halfwidth() / ns.rate_mean(), rr.rate_halfwidth() / rr.rate_mean())
    return g, g * rel


def gain_rows(cfg: NetworkConfig, spec: SweepSpec, scenarios):
    rows = []
    for scenario in scenarios:
        for ratio in sorted(spec.ratios):
            cell = cfg.replace(scenario=scenario).with_ratio(ratio)
            tau_s = average_rate_scheduled(cell).nats_per_hz
            tau_r = average_rate_roundrobin(cell).nats_per_hz
            gain_mc = hw = None
            if "montecarlo" in spec.methods:
                st = run_paired_trials(cell, [1.0], spec.trials, spec.seed, workers=spec.workers)
                gain_mc, hw = _gain_ci(st[Scheduler.NORMALIZED_SNR], st[Scheduler.ROUND_ROBIN])
            rows.append(
                [repr(float(ratio)), str(int(scenario)), _fmt(tau_s), _fmt(tau_r), _fmt(tau_s / tau_r), _fmt(gain_mc), _fmt(hw)]
            )
    return rows


def cmd_coverage(cfg, spec):
    _write_csv(spec.output_path, COVERAGE_COLUMNS, coverage_rows(cfg, spec))
    return EXIT_OK


def cmd_gain(cfg, spec, scenarios=None):
    scenarios = scenarios or (spec.scenario,)
    _write_csv(spec.output_path, GAIN_COLUMNS, gain_rows(cfg, spec, scenarios))
    return EXIT_OK


def cmd_deployment(cfg, spec):
    cell = cfg.with_ratio(spec.ratios[0])
    real = sample_realization(cell, rng=np.random.default_rng(spec.seed), full_users=True)
    fh = _open_out(spec.output_path)
    try:
        write_realization_csv(real, fh or sys.stdout)
    finally:
        if fh is not None:
            fh.close()
    return EXIT_OK


def cmd_validate(spec, ratios=None, theta_db=None):
    rows = validation.run_validation(
        theta_db=theta_db or validation.VALIDATE_THETA_DB,
        ratios=ratios or validation.VALIDATE_RATIOS,
        trials=spec.trials,
        seed=spec.seed,
        workers=spec.workers,
    )
    fh = _open_out(spec.output_path)
    try:
        validation.write_rows(rows, fh or sys.stdout)
    finally:
        if fh is not None:
            fh.close()
    table = "\n".join(validation.summary_table(rows))
    print(table, file=sys.stderr if fh is None else sys.stdout)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_INVALID


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gain":
            cfg, spec, explicit = resolve(args, {"methods": ("general",)})
            scenarios = (spec.scenario,) if "scenario" in explicit else tuple(Scenario)
            return cmd_gain(cfg, spec, scenarios)
        if args.command == "deployment":
            cfg, spec, _ = resolve(args, {"ratios": (5.0,)})
            return cmd_deployment(cfg, spec)
        if args.command == "validate":
            cfg, spec, explicit = resolve(args)
            return cmd_validate(
                spec,
                ratios=spec.ratios if "ratios" in explicit else None,
                theta_db=spec.theta_db if "theta_db" in explicit else None,
            )
        cfg, spec, _ = resolve(args)
        return cmd_coverage(cfg, spec)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
