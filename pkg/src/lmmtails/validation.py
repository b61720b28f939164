"""Property battery behind the ``validate`` command."""

from __future__ import annotations

import math

import numpy as np

from .estimators import black_caplet_value, check_product_bound
from .model import ModelConfig, critical_exponent, cumulative_variance, frozen_drift_integral
from .reports import CheckRow
from .simulation import (
    SimulationPlan,
    TerminalSample,
    reweighted_expectation,
    rn_weights,
    sample_frozen_drift,
    simulate_terminal_measure,
)

__all__ = ["z_check", "live_rates", "run_checks", "check_sample"]

Z_LIMIT = 3.0
STRIKE_FACTORS = (0.5, 1.0, 1.5)
V_FRACTIONS = (0.08, 0.4, 0.8)  # of the critical exponent


def z_check(name: str, estimate: float, se: float, target: float, limit: float = Z_LIMIT) -> CheckRow:
    diff = abs(estimate - target)
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    return CheckRow(name, z <= limit, z, limit)


def live_rates(config: ModelConfig, t: float) -> list[int]:
    """Rates that have not fixed before ``t``."""
    return [n for n in range(1, config.n_rates + 1) if t <= config.tenor.fixing_time(n)]


def check_sample(config: ModelConfig, sample: TerminalSample, seed: int) -> list[CheckRow]:
    t = sample.time
    m = config.n_rates
    f0 = config.curve.forwards
    rows = []
    est, se = reweighted_expectation(sample, np.ones(sample.n_paths), lambda r: r[:, m - 1])
    rows.append(z_check(f"martingale_terminal_F{m}", est, se, f0[m - 1]))
    for n in live_rates(config, t):
        w = rn_weights(sample, config, n)
        est, se = reweighted_expectation(sample, w, lambda r: np.ones(r.shape[0]))
        rows.append(z_check(f"rn_weight_mean_Q{n}", est, se, 1.0))
        est, se = reweighted_expectation(sample, w, lambda r, i=n - 1: r[:, i])
        rows.append(z_check(f"martingale_own_F{n}", est, se, f0[n - 1]))
        if t > 0:
            stdev = math.sqrt(cumulative_variance(config.vols, n, t))
            for factor in STRIKE_FACTORS:
                k = factor * f0[n - 1]
                est, se = reweighted_expectation(
                    sample, w, lambda r, i=n - 1, k=k: np.maximum(r[:, i] - k, 0.0)
                )
                rows.append(
                    z_check(f"caplet_F{n}_K{k:.6g}", est, se, black_caplet_value(f0[n - 1], k, stdev))
                )
            crit = critical_exponent(config.vols, n, t)
            for frac in V_FRACTIONS:
                v = frac * crit
                res = check_product_bound(config, n, t, v, sample)
                rows.append(CheckRow(f"product_bound_F{n}_v{v:.6g}", res.holds, res.z, Z_LIMIT))
            logs = np.log(sample_frozen_drift(config, n, t, sample.n_paths, seed))
            target = math.log(f0[n - 1]) + frozen_drift_integral(config, n, t) - 0.5 * stdev**2
            est, se = reweighted_expectation(logs[:, None], np.ones(logs.size), lambda r: r[:, 0])
            rows.append(z_check(f"frozen_log_mean_F{n}", est, se, target))
    return rows


def run_checks(config: ModelConfig, plan: SimulationPlan, *, workers: int = 1) -> list[CheckRow]:
    sample = simulate_terminal_measure(config, plan, workers=workers)
    return check_sample(config, sample, plan.seed)
