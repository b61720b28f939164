"""TOML model configuration.

Schema::

    [tenor]
    dates = [2.0, 2.5, 3.0]          # T_0 < T_1 < ... < T_M
    year_fractions = [0.5, 0.5]      # optional, defaults to date differences

    [vols]
    constant = 0.2                   # same flat level for every rate, or
    # one [[vols.rate]] table per rate, in order:
    # [[vols.rate]]
    # pairs = [[0.0, 0.3], [1.0, 0.1]]   # (breakpoint, level): level holds from breakpoint on
    # end = 2.0                          # optional right end of the domain

    [correlation]
    matrix = [[1.0, 1.0], [1.0, 1.0]]
    # or: beta = 0.1   -> rho_ij = exp(-beta |T_{i-1} - T_{j-1}|)

    [curve]
    forwards = [0.04, 0.04]          # or: flat = 0.04
"""

from __future__ import annotations

import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DomainError, NotACorrelationMatrixError
from .model import (
    CorrelationMatrix,
    InitialCurve,
    ModelConfig,
    PiecewiseConstant,
    TenorStructure,
    VolTermStructure,
)

__all__ = ["load_config", "parse_config"]


def _section(data: dict, name: str) -> dict:
    sec = data.get(name)
    if not isinstance(sec, dict):
        raise ConfigError("missing section", name)
    return sec


def _numbers(value, field: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a non-empty array of numbers", field)
    out = []
    for i, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"expected a number, got {x!r}", f"{field}[{i}]")
        out.append(float(x))
    return out


def _tenor(sec: dict) -> TenorStructure:
    dates = _numbers(sec.get("dates"), "tenor.dates")
    if dates[0] <= 0:
        raise ConfigError(f"{dates[0]!r} must be positive", "tenor.dates[0]")
    for i in range(1, len(dates)):
        if dates[i] <= dates[i - 1]:
            raise ConfigError(
                f"{dates[i]!r} must exceed the previous date {dates[i - 1]!r}",
                f"tenor.dates[{i}]",
            )
    taus = None
    if "year_fractions" in sec:
        taus = _numbers(sec["year_fractions"], "tenor.year_fractions")
        if len(taus) != len(dates) - 1:
            raise ConfigError(f"expected {len(dates) - 1} entries", "tenor.year_fractions")
        for i, tau in enumerate(taus):
            if not tau > 0:
                raise ConfigError(f"{tau!r} must be positive", f"tenor.year_fractions[{i}]")
    if len(dates) < 2:
        raise ConfigError("need at least two dates", "tenor.dates")
    return TenorStructure(dates, taus)


def _vols(sec: dict, m: int) -> VolTermStructure:
    end = float(sec.get("end", math.inf))
    if "constant" in sec:
        level = sec["constant"]
        if isinstance(level, bool) or not isinstance(level, (int, float)) or not level > 0:
            raise ConfigError(f"{level!r} must be a positive number", "vols.constant")
        return VolTermStructure.constant(m, float(level), end)
    tables = sec.get("rate")
    if not isinstance(tables, list):
        raise ConfigError("give either `constant` or one [[vols.rate]] table per rate", "vols")
    if len(tables) != m:
        raise ConfigError(f"expected {m} [[vols.rate]] tables, got {len(tables)}", "vols.rate")
    fns = []
    for k, tab in enumerate(tables):
        field = f"vols.rate[{k}]"
        pairs = tab.get("pairs")
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError("expected an array of [breakpoint, level] pairs", f"{field}.pairs")
        knots, levels = [], []
        for i, pair in enumerate(pairs):
            xs = _numbers(pair, f"{field}.pairs[{i}]")
            if len(xs) != 2:
                raise ConfigError("expected [breakpoint, level]", f"{field}.pairs[{i}]")
            if not xs[1] > 0:
                raise ConfigError(f"level {xs[1]!r} must be positive", f"{field}.pairs[{i}]")
            knots.append(xs[0])
            levels.append(xs[1])
        try:
            fns.append(PiecewiseConstant(knots, levels, float(tab.get("end", end))))
        except DomainError as exc:
            raise ConfigError(str(exc), field) from None
    return VolTermStructure(tuple(fns))


def _correlation(sec: dict, tenor: TenorStructure) -> CorrelationMatrix:
    try:
        if "matrix" in sec:
            rows = sec["matrix"]
            if not isinstance(rows, list):
                raise ConfigError("expected an array of rows", "correlation.matrix")
            matrix = [_numbers(r, f"correlation.matrix[{i}]") for i, r in enumerate(rows)]
            if any(len(r) != len(matrix) for r in matrix):
                raise ConfigError("matrix must be square", "correlation.matrix")
            return CorrelationMatrix(matrix)
        if "beta" in sec:
            beta = sec["beta"]
            if isinstance(beta, bool) or not isinstance(beta, (int, float)) or beta < 0:
                raise ConfigError(f"{beta!r} must be a nonnegative number", "correlation.beta")
            return CorrelationMatrix.exponential(tenor.dates[:-1], float(beta))
    except NotACorrelationMatrixError as exc:
        raise ConfigError(str(exc), "correlation") from None
    raise ConfigError("give `matrix` or `beta`", "correlation")


def _curve(sec: dict, m: int) -> InitialCurve:
    if "flat" in sec:
        level = sec["flat"]
        if isinstance(level, bool) or not isinstance(level, (int, float)) or not level > 0:
            raise ConfigError(f"{level!r} must be a positive number", "curve.flat")
        return InitialCurve([float(level)] * m)
    fwd = _numbers(sec.get("forwards"), "curve.forwards")
    for i, f in enumerate(fwd):
        if not f > 0:
            raise ConfigError(f"{f!r} must be positive", f"curve.forwards[{i}]")
    return InitialCurve(fwd)


def parse_config(data: dict) -> ModelConfig:
    """Build a validated :class:`ModelConfig` from a parsed TOML document."""
    tenor = _tenor(_section(data, "tenor"))
    m = tenor.n_rates
    vols = _vols(_section(data, "vols"), m)
    corr = _correlation(_section(data, "correlation"), tenor)
    curve = _curve(_section(data, "curve"), m)
    try:
        return ModelConfig(tenor, vols, corr, curve)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ModelConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from None
    return parse_config(data)
