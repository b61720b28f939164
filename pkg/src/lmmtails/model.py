"""Static model data and closed-form quantities of the log-normal LIBOR market model.

Rates are indexed ``1..M`` as in the usual notation: rate ``n`` accrues over
``[T_{n-1}, T_n]`` and fixes (expires) at ``T_{n-1}``.  Internally arrays are
zero-based, so rate ``n`` lives at position ``n - 1``.

Under the terminal measure the log-rate dynamics read

.. math::

    d\\log F_n = \\Big(\\mu_n(t) - \\tfrac12\\sigma_n(t)^2\\Big)dt + \\sigma_n(t)\\,dW_n,
    \\qquad
    \\mu_n(t) = -\\sigma_n(t)\\sum_{j>n}
        \\frac{\\rho_{nj}\\tau_j\\sigma_j(t)F_j(t)}{1+\\tau_jF_j(t)},

with :math:`\\mu_M \\equiv 0`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DomainError, NotACorrelationMatrixError

__all__ = [
    "Verdict",
    "DIVERGENT",
    "TenorStructure",
    "PiecewiseConstant",
    "VolTermStructure",
    "CorrelationMatrix",
    "InitialCurve",
    "ModelConfig",
    "cumulative_variance",
    "critical_exponent",
    "lognormal_logsquare_moment",
    "terminal_drift",
    "frozen_drift_integral",
    "cholesky_factor",
]

_PSD_TOL = 1e-10


class Verdict(str, Enum):
    """Finiteness classification of an exponential moment."""

    CONVERGENT = "CONVERGENT"
    SUSPECT = "SUSPECT"
    DIVERGENT = "DIVERGENT"


DIVERGENT = Verdict.DIVERGENT


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TenorStructure:
    """Tenor dates ``T_0 < ... < T_M`` and accrual fractions ``tau_1..tau_M``.

    If ``year_fractions`` is omitted the accruals default to the date
    differences.
    """

    dates: np.ndarray
    year_fractions: np.ndarray | None = None

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype=float).ravel()
        if dates.size < 2:
            raise DomainError("tenor needs at least two dates (M >= 1)")
        if not np.all(np.isfinite(dates)):
            raise DomainError("tenor dates must be finite")
        if dates[0] <= 0:
            raise DomainError(f"tenor.dates[0]={dates[0]!r} must be positive")
        for i in range(1, dates.size):
            if dates[i] <= dates[i - 1]:
                raise DomainError(
                    f"tenor.dates[{i}]={dates[i]!r} must exceed tenor.dates[{i - 1}]={dates[i - 1]!r}"
                )
        if self.year_fractions is None:
            taus = np.diff(dates)
        else:
            taus = np.asarray(self.year_fractions, dtype=float).ravel()
            if taus.size != dates.size - 1:
                raise DomainError(
                    f"expected {dates.size - 1} year fractions, got {taus.size}"
                )
            bad = np.flatnonzero(~(taus > 0))
            if bad.size:
                raise DomainError(
                    f"tenor.year_fractions[{bad[0]}]={taus[bad[0]]!r} must be positive"
                )
        object.__setattr__(self, "dates", _frozen_array(dates))
        object.__setattr__(self, "year_fractions", _frozen_array(taus))

    @property
    def n_rates(self) -> int:
        return self.dates.size - 1

    def fixing_time(self, n: int) -> float:
        """Expiry ``T_{n-1}`` of rate ``n``."""
        return float(self.dates[n - 1])

    def tau(self, n: int) -> float:
        return float(self.year_fractions[n - 1])


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function on ``[0, end]``.

    ``levels[k]`` applies on ``[knots[k], knots[k + 1])``; the last level holds
    up to ``end`` (inclusive).
    """

    knots: np.ndarray
    levels: np.ndarray
    end: float = math.inf

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).ravel()
        levels = np.asarray(self.levels, dtype=float).ravel()
        if knots.size == 0 or knots.size != levels.size:
            raise DomainError("need one level per breakpoint")
        if knots[0] != 0.0:
            raise DomainError("first breakpoint must be 0")
        if np.any(np.diff(knots) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if not np.all(levels > 0) or not np.all(np.isfinite(levels)):
            raise DomainError("volatility levels must be positive and finite")
        end = float(self.end)
        if not end > knots[-1]:
            raise DomainError("domain end must lie beyond the last breakpoint")
        object.__setattr__(self, "knots", _frozen_array(knots))
        object.__setattr__(self, "levels", _frozen_array(levels))
        object.__setattr__(self, "end", end)

    @classmethod
    def constant(cls, level: float, end: float = math.inf) -> "PiecewiseConstant":
        return cls([0.0], [level], end)

    def _check(self, t: float) -> float:
        t = float(t)
        if t < 0 or t > self.end or math.isnan(t):
            raise DomainError(f"t={t!r} outside volatility domain [0, {self.end}]")
        return t

    def __call__(self, t: float) -> float:
        t = self._check(t)
        return float(self.levels[np.searchsorted(self.knots, t, side="right") - 1])

    def integrate(self, t: float, power: int = 2) -> float:
        """Exact integral of ``sigma(s) ** power`` over ``[0, t]``."""
        t = self._check(t)
        edges = np.append(self.knots, np.inf)
        lengths = np.clip(np.minimum(edges[1:], t) - edges[:-1], 0.0, None)
        return math.fsum(lengths * self.levels**power)


def _product_integral(f: PiecewiseConstant, g: PiecewiseConstant, t: float) -> float:
    """Exact integral of ``f * g`` over ``[0, t]`` on the merged breakpoints."""
    f._check(t)
    g._check(t)
    knots = np.union1d(f.knots, g.knots)
    knots = knots[knots < t]
    upper = np.append(knots[1:], t)
    fv = f.levels[np.searchsorted(f.knots, knots, side="right") - 1]
    gv = g.levels[np.searchsorted(g.knots, knots, side="right") - 1]
    return math.fsum((upper - knots) * fv * gv)


@dataclass(frozen=True)
class VolTermStructure:
    """One piecewise-constant volatility function per rate."""

    functions: tuple[PiecewiseConstant, ...]

    def __post_init__(self):
        fns = tuple(self.functions)
        if not fns or not all(isinstance(f, PiecewiseConstant) for f in fns):
            raise DomainError("vols must be a non-empty sequence of PiecewiseConstant")
        object.__setattr__(self, "functions", fns)

    @classmethod
    def constant(cls, n_rates: int, level: float, end: float = math.inf):
        return cls(tuple(PiecewiseConstant.constant(level, end) for _ in range(n_rates)))

    @property
    def n_rates(self) -> int:
        return len(self.functions)

    def __getitem__(self, n: int) -> PiecewiseConstant:
        """Volatility of rate ``n`` (one-based)."""
        if not 1 <= n <= len(self.functions):
            raise DomainError(f"rate index {n} outside 1..{len(self.functions)}")
        return self.functions[n - 1]

    def at(self, t: float) -> np.ndarray:
        """Vector ``(sigma_1(t), ..., sigma_M(t))``; rates past their domain get 0."""
        return np.array([f(t) if t <= f.end else 0.0 for f in self.functions])

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([f.knots for f in self.functions]))

    def covariance_integral(self, n: int, j: int, t: float) -> float:
        return _product_integral(self[n], self[j], t)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric, unit-diagonal, positive semidefinite ``M x M`` matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=float)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] == 0:
            raise NotACorrelationMatrixError(f"correlation must be square, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise NotACorrelationMatrixError("correlation entries must be finite")
        if np.any(np.abs(rho) > 1.0):
            raise NotACorrelationMatrixError("correlation entries must lie in [-1, 1]")
        if not np.allclose(rho, rho.T, rtol=0.0, atol=1e-14):
            raise NotACorrelationMatrixError("correlation matrix must be symmetric")
        if not np.all(np.diag(rho) == 1.0):
            raise NotACorrelationMatrixError("correlation matrix must have unit diagonal")
        lam = float(np.linalg.eigvalsh(rho).min())
        if lam < -_PSD_TOL:
            raise NotACorrelationMatrixError(
                f"correlation matrix is not positive semidefinite: smallest eigenvalue {lam:.6g}",
                eigenvalue=lam,
            )
        object.__setattr__(self, "matrix", _frozen_array(rho))

    @classmethod
    def exponential(cls, times: Sequence[float], beta: float) -> "CorrelationMatrix":
        """``rho_ij = exp(-beta |t_i - t_j|)``."""
        if beta < 0:
            raise DomainError("beta must be nonnegative")
        t = np.asarray(times, dtype=float)
        return cls(np.exp(-beta * np.abs(t[:, None] - t[None, :])))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class InitialCurve:
    forwards: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.forwards, dtype=float).ravel()
        bad = np.flatnonzero(~(f > 0) | ~np.isfinite(f))
        if f.size == 0:
            raise DomainError("initial curve is empty")
        if bad.size:
            raise DomainError(f"curve.forwards[{bad[0]}]={f[bad[0]]!r} must be positive")
        object.__setattr__(self, "forwards", _frozen_array(f))


@dataclass(frozen=True)
class ModelConfig:
    tenor: TenorStructure
    vols: VolTermStructure
    corr: CorrelationMatrix
    curve: InitialCurve
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = self.tenor.n_rates
        sizes = {
            "vols": self.vols.n_rates,
            "correlation": self.corr.size,
            "curve": self.curve.forwards.size,
        }
        for name, size in sizes.items():
            if size != m:
                raise DomainError(f"{name} has dimension {size}, tenor implies M={m}")
        for n in range(1, m + 1):
            if self.vols[n].end < self.tenor.fixing_time(n):
                raise DomainError(
                    f"vols[{n}] defined up to {self.vols[n].end}, "
                    f"needs at least T_{n - 1}={self.tenor.fixing_time(n)}"
                )
        object.__setattr__(self, "_chol", cholesky_factor(self.corr))

    @property
    def n_rates(self) -> int:
        return self.tenor.n_rates

    @property
    def cholesky(self) -> np.ndarray:
        return self._chol

    def check_rate(self, n: int) -> int:
        if not isinstance(n, (int, np.integer)) or not 1 <= n <= self.n_rates:
            raise DomainError(f"rate index {n!r} outside 1..{self.n_rates}")
        return int(n)


def cumulative_variance(vols: VolTermStructure, n: int, t: float) -> float:
    """Integrated variance ``int_0^t sigma_n(s)^2 ds`` of rate ``n``."""
    return vols[n].integrate(t, power=2)


def critical_exponent(vols: VolTermStructure, n: int, t: float) -> float:
    """Supremum of ``v`` with ``E[exp(v log^2 F_n(t))] < inf``.

    The value ``1 / (2 int_0^t sigma_n^2)`` holds under every forward measure
    of the tenor structure, for the full model and for its frozen-drift
    version alike.
    """
    if not t > 0:
        raise DomainError(f"critical exponent requires t > 0, got {t!r}")
    return 1.0 / (2.0 * cumulative_variance(vols, n, t))


def lognormal_logsquare_moment(mu: float, sigma2: float, v: float) -> float | Verdict:
    """``E[exp(v log^2 X)]`` for ``log X ~ N(mu, sigma2)``.

    Returns :data:`DIVERGENT` when ``v >= 1 / (2 sigma2)``; the boundary
    itself is divergent.  Finite values too large for a double come back as
    ``inf``.
    """
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    gap = 1.0 - 2.0 * sigma2 * v
    if gap <= 0:
        return DIVERGENT
    try:
        return math.exp(mu * mu * v / gap) / math.sqrt(gap)
    except OverflowError:
        return math.inf


def terminal_drift(config: ModelConfig, n: int, t: float, state) -> float:
    """Drift of ``dF_n / F_n`` under the terminal measure.

    ``state`` is a :class:`~lmmtails.simulation.MarketState` or a plain
    sequence of the ``M`` current rates.
    """
    n = config.check_rate(n)
    m = config.n_rates
    if n == m:
        return 0.0
    rates = np.asarray(getattr(state, "rates", state), dtype=float)
    sig = config.vols.at(t)
    tau = config.tenor.year_fractions
    rho = config.corr.matrix
    terms = [
        rho[n - 1, j] * tau[j] * sig[j] * rates[j] / (1.0 + tau[j] * rates[j])
        for j in range(n, m)
    ]
    return -sig[n - 1] * math.fsum(terms)


def frozen_drift_integral(config: ModelConfig, n: int, t: float) -> float:
    """``int_0^t`` of the frozen-drift coefficient of rate ``n`` (exact)."""
    n = config.check_rate(n)
    t = float(t)
    expiry = config.tenor.fixing_time(n)
    if t < 0 or t > expiry:
        raise DomainError(f"t={t!r} outside [0, T_{n - 1}={expiry}] for rate {n}")
    tau = config.tenor.year_fractions
    f0 = config.curve.forwards
    rho = config.corr.matrix
    terms = []
    for j in range(n + 1, config.n_rates + 1):
        weight = tau[j - 1] * f0[j - 1] / (1.0 + tau[j - 1] * f0[j - 1])
        terms.append(rho[n - 1, j - 1] * weight * config.vols.covariance_integral(n, j, t))
    return -math.fsum(terms)


def cholesky_factor(corr: CorrelationMatrix) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == rho``.

    Singular (semidefinite) matrices get a diagonal ridge starting at 1e-12.
    """
    rho = corr.matrix if isinstance(corr, CorrelationMatrix) else CorrelationMatrix(corr).matrix
    lam = float(np.linalg.eigvalsh(rho).min())
    if lam < -_PSD_TOL:
        raise NotACorrelationMatrixError(
            f"smallest eigenvalue {lam:.6g} below -{_PSD_TOL}", eigenvalue=lam
        )
    eye = np.eye(rho.shape[0])
    ridge = 0.0
    while True:
        try:
            return np.linalg.cholesky(rho + ridge * eye)
        except np.linalg.LinAlgError:
            ridge = 1e-12 if ridge == 0.0 else ridge * 4.0
            if ridge > 2 * _PSD_TOL:
                raise NotACorrelationMatrixError(
                    "Cholesky factorisation failed", eigenvalue=lam
                ) from None
