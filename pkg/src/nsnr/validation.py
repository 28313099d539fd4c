"""Oracle-equivalence checks behind ``nsnr validate``.

Every check produces plain rows (name, case, value, reference, tolerance,
passed) so the report can be written as a deterministic CSV: the same seed
and grid always give the same bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from nsnr.analysis import (
    conditional_coverage,
    coverage_mode_approximation,
    coverage_probability,
    coverage_special_case,
    scheduling_gain,
)
from nsnr.model import NetworkConfig, Scenario, max_fading_cdf
from nsnr.montecarlo import Scheduler, run_paired_trials
from nsnr.numerics import rho, rho_quadrature

VALIDATE_THETA_DB = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
VALIDATE_RATIOS = (1.0, 5.0, 10.0)
GAIN_RATIOS = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
COLUMNS = ("check", "case", "value", "reference", "tolerance", "passed")


@dataclass(frozen=True)
class CheckRow:
    check: str
    case: str
    value: float
    reference: float
    tolerance: float
    passed: bool

    def as_csv(self):
        return [
            self.check,
            self.case,
            repr(float(self.value)),
            repr(float(self.reference)),
            repr(float(self.tolerance)),
            "pass" if self.passed else "fail",
        ]


def db_to_linear(theta_db):
    return 10.0 ** (float(theta_db) / 10.0)


def _close(check, case, value, reference, tol):
    return CheckRow(check, case, value, reference, tol, abs(value - reference) <= tol)


def check_special_vs_general(theta_db, ratios, tol=1e-6):
    rows = []
    for ratio in ratios:
        cfg = NetworkConfig.from_ratio(ratio)
        for t in theta_db:
            theta = db_to_linear(t)
            rows.append(
                _close(
                    "special_vs_general",
                    f"ratio={ratio:g} theta_db={t:g}",
                    coverage_probability(theta, cfg).probability,
                    coverage_special_case(theta, ratio).probability,
                    tol,
                )
            )
    return rows


def check_approx_vs_special(theta_db, ratios, tol=0.03):
    rows = []
    for ratio in ratios:
        if float(ratio) != int(ratio):
            continue
        for t in theta_db:
            theta = db_to_linear(t)
            rows.append(
                _close(
                    "approx_vs_special",
                    f"ratio={ratio:g} theta_db={t:g}",
                    coverage_mode_approximation(theta, int(ratio)).probability,
                    coverage_special_case(theta, ratio).probability,
                    tol,
                )
            )
    return rows


def montecarlo_coverage(theta_db, ratios, trials, seed, cfg=None, workers=1):
    """Simulated coverage of the scheduled user per ratio: {ratio: TrialStatistics}."""
    base = cfg if cfg is not None else NetworkConfig()
    thetas = [db_to_linear(t) for t in theta_db]
    return {
        ratio: run_paired_trials(base.with_ratio(ratio), thetas, trials, seed, workers=workers)[
            Scheduler.NORMALIZED_SNR
        ]
        for ratio in ratios
    }


def check_montecarlo_vs_special(theta_db, ratios, stats, floor=0.015, ci_factor=3.0):
    rows = []
    for ratio in ratios:
        st = stats[ratio]
        pc, hw = st.coverage(), st.coverage_halfwidth()
        for i, t in enumerate(theta_db):
            ref = coverage_special_case(db_to_linear(t), ratio).probability
            rows.append(
                _close("montecarlo_vs_special", f"ratio={ratio:g} theta_db={t:g}", pc[i], ref, max(floor, ci_factor * hw[i]))
            )
    return rows


def check_increasing_in_ratio(theta_db, ratios, stats=None):
    """Coverage strictly increases with the density ratio at every threshold."""
    rows = []
    ordered = sorted(ratios)
    for t_idx, t in enumerate(theta_db):
        theta = db_to_linear(t)
        analytic = [coverage_special_case(theta, r).probability for r in ordered]
        columns = [("analysis", analytic)]
        if stats is not None:
            columns.append(("montecarlo", [stats[r].coverage()[t_idx] for r in ordered]))
        for label, values in columns:
            step = min(b - a for a, b in zip(values, values[1:])) if len(values) > 1 else math.inf
            rows.append(CheckRow(f"increasing_in_ratio_{label}", f"theta_db={t:g}", step, 0.0, 0.0, step > 0))
    return rows


def check_gain(ratios=GAIN_RATIOS, convergence_tol=0.05):
    rows = []
    gains = {}
    for scenario in Scenario:
        values = [scheduling_gain(NetworkConfig.from_ratio(r, scenario=scenario)) for r in ratios]
        gains[scenario] = values
        rows.append(CheckRow("gain_at_least_one", f"scenario={int(scenario)}", min(values), 1.0, 0.0, min(values) >= 1.0))
        step = min(b - a for a, b in zip(values, values[1:])) if len(values) > 1 else 0.0
        rows.append(CheckRow("gain_nondecreasing", f"scenario={int(scenario)}", step, 0.0, 0.0, step >= 0.0))
    g1 = gains[Scenario.ALL_BS_ACTIVE][-1]
    g2 = gains[Scenario.ONLY_LOADED_BS_ACTIVE][-1]
    rel = abs(g2 - g1) / g1
    rows.append(CheckRow("gain_scenarios_converge", f"ratio={ratios[-1]:g}", rel, 0.0, convergence_tol, rel <= convergence_tol))
    return rows


def check_rho_closed_form(tol=1e-8):
    rows = []
    for s in np.logspace(-3, 3, 25):
        rows.append(_close("rho_closed_form", f"s={s:.6g}", rho(float(s), 4.0), rho_quadrature(float(s), 4.0), tol))
    return rows


def check_order_statistic_identity(tol=1e-12, xs=(1.0, 2.0, 4.0)):
    """Binomial series with fixed interference against the max-of-exponentials ccdf."""
    rows = []
    cfg = NetworkConfig()
    r, theta = 1.0, 1.0
    for x in xs:
        i0 = x - cfg.noise
        for n in range(0, 21):
            value = conditional_coverage(r, n, theta, cfg, laplace=lambda s, i0=i0: math.exp(-s * i0))
            rows.append(_close("order_statistic_identity", f"x={x:g} n={n}", value, 1.0 - max_fading_cdf(x, n), tol))
    return rows


def run_validation(theta_db=VALIDATE_THETA_DB, ratios=VALIDATE_RATIOS, trials=100_000, seed=42, workers=1):
    stats = montecarlo_coverage(theta_db, ratios, trials, seed, workers=workers)
    rows = []
    rows += check_special_vs_general(theta_db, ratios)
    rows += check_approx_vs_special(theta_db, ratios)
    rows += check_montecarlo_vs_special(theta_db, ratios, stats)
    rows += check_increasing_in_ratio(theta_db, ratios, stats)
    rows += check_gain()
    rows += check_rho_closed_form()
    rows += check_order_statistic_identity()
    return rows


def write_rows(rows, handle):
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())


def summary_table(rows):
    """One line per check name: passed/total and PASS or FAIL."""
    names = []
    for row in rows:
        if row.check not in names:
            names.append(row.check)
    width = max(len(n) for n in names)
    lines = []
    for name in names:
        group = [r for r in rows if r.check == name]
        ok = sum(r.passed for r in group)
        verdict = "PASS" if ok == len(group) else "FAIL"
        lines.append(f"{name:<{width}}  {ok:>3}/{len(group):<3}  {verdict}")
    return lines
