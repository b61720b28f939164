"""Monte Carlo paths of the forward-rate vector under the terminal measure.

Paths are generated block by block; each path draws its normals from a
Philox stream keyed by ``(seed, path)`` so the output is the same for any
block size or worker count.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, StateError
from .model import (
    ModelConfig,
    cumulative_variance,
    frozen_drift_integral,
)
from .philox import standard_normals

__all__ = [
    "MarketState",
    "SimulationPlan",
    "TerminalSample",
    "time_grid",
    "simulate_on_grid",
    "simulate_terminal_measure",
    "sample_frozen_drift",
    "rn_weight_to_measure",
    "rn_weights",
    "reweighted_expectation",
    "write_terminal_csv",
]

log = logging.getLogger(__name__)

STREAM_TERMINAL = 0
STREAM_FROZEN = 0x100  # + rate index

_GRID_TOL = 1e-12


@dataclass(frozen=True)
class MarketState:
    """Forward rates of one path at time ``time``.

    ``expired[i]`` is set once ``time`` has reached the fixing date of rate
    ``i + 1``; expired rates keep their fixing value.
    """

    time: float
    rates: np.ndarray
    expired: np.ndarray


@dataclass(frozen=True)
class SimulationPlan:
    horizon: float
    steps_per_year: int = 64
    n_paths: int = 100_000
    seed: int = 42
    antithetic: bool = False

    def __post_init__(self):
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be finite and >= 0, got {self.horizon!r}")
        if int(self.steps_per_year) != self.steps_per_year or self.steps_per_year < 1:
            raise DomainError("steps_per_year must be a positive integer")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError("n_paths must be a positive integer")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("n_paths must be even when antithetic sampling is on")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must fit in 64 bits")


@dataclass(frozen=True)
class TerminalSample:
    """Simulated rates at the horizon, one row per path.

    ``likelihood_factors`` (optional) holds ``1 + tau_i F_i(t)``.
    """

    time: float
    rates: np.ndarray
    expired: np.ndarray
    fixing_times: np.ndarray
    likelihood_factors: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.rates.shape[0]

    def state(self, path: int) -> MarketState:
        return MarketState(self.time, self.rates[path].copy(), self.expired.copy())

    def rate(self, n: int) -> np.ndarray:
        return self.rates[:, n - 1]


def time_grid(config: ModelConfig, plan: SimulationPlan) -> np.ndarray:
    """Simulation dates from 0 to the horizon.

    Union of the uniform grid, the horizon, the tenor dates and the volatility
    breakpoints inside ``[0, horizon]``.
    """
    h = float(plan.horizon)
    k = int(math.floor(h * plan.steps_per_year + _GRID_TOL))
    pts = np.concatenate(
        [
            np.arange(k + 1) / plan.steps_per_year,
            [0.0, h],
            config.tenor.dates,
            config.vols.breakpoints(),
        ]
    )
    pts = np.unique(pts[(pts >= 0) & (pts <= h)])
    keep = np.ones(pts.size, dtype=bool)
    last = pts[0]
    for i in range(1, pts.size):
        if pts[i] - last <= _GRID_TOL:
            keep[i] = False
        else:
            last = pts[i]
    pts = pts[keep]
    pts[-1] = h
    return pts


def simulate_on_grid(
    config: ModelConfig, grid: np.ndarray, normals: np.ndarray
) -> np.ndarray:
    """Log-Euler evolution of all rates from 0 to ``grid[-1]``.

    Parameters
    ----------
    grid : (K + 1,) array
        Increasing dates starting at 0; must contain every fixing date it spans.
    normals : (P, K, M) array
        Independent standard normals per path, step and factor.

    Returns
    -------
    (P, M) array of rates at ``grid[-1]``.
    """
    grid = np.asarray(grid, dtype=float)
    n_paths, n_steps, m = normals.shape
    if n_steps != grid.size - 1 or m != config.n_rates:
        raise DomainError("normals shape does not match grid and model dimension")
    chol = config.cholesky
    rho = config.corr.matrix
    tau = config.tenor.year_fractions
    fixings = config.tenor.dates[:-1]
    logf = np.tile(np.log(config.curve.forwards), (n_paths, 1))
    for k in range(n_steps):
        t0, dt = grid[k], grid[k + 1] - grid[k]
        live = t0 < fixings - _GRID_TOL
        sig = np.where(live, config.vols.at(t0), 0.0)
        f = np.exp(logf)
        g = sig * tau * f / (1.0 + tau * f)
        z = normals[:, k, :]
        sqdt = math.sqrt(dt)
        for n in range(m):
            if not live[n]:
                continue
            drift = np.zeros(n_paths)
            for j in range(n + 1, m):
                if rho[n, j] != 0.0:
                    drift += rho[n, j] * g[:, j]
            drift *= -sig[n]
            shock = np.zeros(n_paths)
            for j in range(n + 1):
                if chol[n, j] != 0.0:
                    shock += chol[n, j] * z[:, j]
            logf[:, n] += (drift - 0.5 * sig[n] ** 2) * dt + sig[n] * sqdt * shock
    return np.exp(logf)


def _check_horizon(config: ModelConfig, horizon: float, require_all_live: bool):
    last_fix = config.tenor.fixing_time(config.n_rates)
    if require_all_live and horizon > last_fix:
        raise DomainError(
            f"horizon {horizon} exceeds T_{config.n_rates - 1}={last_fix}; rate {config.n_rates} would expire"
        )


def simulate_terminal_measure(
    config: ModelConfig,
    plan: SimulationPlan,
    *,
    require_all_live: bool = True,
    keep_likelihood: bool = False,
    workers: int = 1,
    block_size: int = 32_768,
) -> TerminalSample:
    """Simulate the rates at ``plan.horizon`` under the terminal measure.

    The result depends only on ``(config, plan)``; ``workers`` and
    ``block_size`` affect speed and memory only.
    """
    h = float(plan.horizon)
    _check_horizon(config, h, require_all_live)
    grid = time_grid(config, plan)
    m = config.n_rates
    n_draws = (grid.size - 1) * m
    out = np.empty((plan.n_paths, m))

    def run(start: int) -> None:
        stop = min(start + block_size, plan.n_paths)
        z = standard_normals(
            plan.seed, STREAM_TERMINAL, np.arange(start, stop), n_draws, plan.antithetic
        )
        out[start:stop] = simulate_on_grid(config, grid, z.reshape(stop - start, -1, m))

    starts = range(0, plan.n_paths, block_size)
    log.info("simulating %d paths on %d steps (M=%d)", plan.n_paths, grid.size - 1, m)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for s in starts:
            run(s)
    fixings = config.tenor.dates[:-1].copy()
    lik = 1.0 + config.tenor.year_fractions * out if keep_likelihood else None
    return TerminalSample(h, out, h >= fixings, fixings, lik)


def sample_frozen_drift(
    config: ModelConfig,
    n: int,
    t: float,
    n_paths: int,
    seed: int,
    antithetic: bool = False,
) -> np.ndarray:
    """Exact draws of the frozen-drift rate ``F_n^fd(t)`` (log-normal)."""
    n = config.check_rate(n)
    expiry = config.tenor.fixing_time(n)
    if not 0 <= t <= expiry:
        raise DomainError(f"t={t!r} outside [0, T_{n - 1}={expiry}] for rate {n}")
    if antithetic and n_paths % 2:
        raise DomainError("n_paths must be even when antithetic sampling is on")
    var = cumulative_variance(config.vols, n, t)
    mean = math.log(config.curve.forwards[n - 1]) + frozen_drift_integral(config, n, t) - 0.5 * var
    z = standard_normals(seed, STREAM_FROZEN + n, np.arange(n_paths), 1, antithetic)[:, 0]
    return np.exp(mean + math.sqrt(var) * z)


def _weight_factors(time, fixing_times, config: ModelConfig, target: int):
    target = config.check_rate(target)
    for i in range(target + 1, config.n_rates + 1):
        if time > fixing_times[i - 1] + _GRID_TOL:
            raise StateError(
                f"rate {i} expired at T_{i - 1}={fixing_times[i - 1]} before t={time}; "
                f"cannot change measure to Q^{target}"
            )
    idx = slice(target, config.n_rates)
    tau = config.tenor.year_fractions[idx]
    return idx, tau, 1.0 + tau * config.curve.forwards[idx]


def rn_weight_to_measure(path: MarketState, config: ModelConfig, target: int) -> float:
    """Density ``dQ^target / dQ^M`` on the information at ``path.time``.

    Equals ``prod_{i > target} (1 + tau_i F_i(t)) / (1 + tau_i F_i(0))``, the
    ratio of the bond numeraires ``P(t, T_target) / P(t, T_M)`` normalised to
    one at time 0.
    """
    idx, tau, base = _weight_factors(path.time, config.tenor.dates[:-1], config, target)
    rates = np.asarray(path.rates, dtype=float)[idx]
    return float(np.prod((1.0 + tau * rates) / base))


def rn_weights(sample: TerminalSample, config: ModelConfig, target: int) -> np.ndarray:
    """:func:`rn_weight_to_measure` for every path of ``sample``."""
    idx, tau, base = _weight_factors(sample.time, sample.fixing_times, config, target)
    w = np.ones(sample.n_paths)
    for c in range(idx.start, idx.stop):
        k = c - idx.start
        w *= (1.0 + tau[k] * sample.rates[:, c]) / base[k]
    return w


def _fmean(x: np.ndarray) -> float:
    return math.fsum(x) / x.size


def reweighted_expectation(
    samples, weights: np.ndarray, payoff: Callable[[np.ndarray], np.ndarray]
) -> tuple[float, float]:
    """Estimate ``E^target[payoff]`` as the plain average of ``payoff * weight``.

    ``samples`` is a :class:`TerminalSample` or an array of rates;
    ``payoff`` receives that array (rows are paths).

    Returns
    -------
    (estimate, standard_error)
    """
    rates = samples.rates if isinstance(samples, TerminalSample) else np.asarray(samples)
    w = np.asarray(weights, dtype=float)
    if rates.shape[0] == 0 or w.size == 0:
        raise DomainError("empty sample")
    if w.size != rates.shape[0]:
        raise DomainError("weights and samples differ in length")
    y = np.asarray(payoff(rates), dtype=float) * w
    est = _fmean(y)
    if y.size < 2:
        return est, math.inf
    var = math.fsum((y - est) ** 2) / (y.size - 1)
    return est, math.sqrt(var / y.size)


def write_terminal_csv(sample: TerminalSample, path) -> None:
    """``path,F_1,...,F_M`` with shortest round-trip float formatting."""
    m = sample.rates.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path"] + [f"F_{i}" for i in range(1, m + 1)])
        for p, row in enumerate(sample.rates.tolist()):
            writer.writerow([p] + [repr(x) for x in row])
