"""Batch front end.

Usage::

    lmm-tails simulate    --config model.toml --out runs
    lmm-tails moment-scan --config model.toml --out runs --rate 1 --horizon 1 --v-grid 2:25:24
    lmm-tails tail-report --config model.toml --out runs --quantiles 0.99:0.9999
    lmm-tails validate    --config model.toml --out runs --paths 100000

Each run writes into ``<out>/<command>-<UTC timestamp>-<seed>/`` together with a
``manifest.json`` holding the resolved run specification.  On failure the last
line on stderr is ``<CODE>: <message>`` with CODE one of ``E_CONFIG``,
``E_DOMAIN``, ``E_BRACKET``, ``E_CHECK_FAIL``.

Output files:

* ``terminal_sample.csv``: ``path,F_1,...,F_M``
* ``scan.csv``: ``v,estimate,std_error,max_share,n_eff,verdict``, plus ``report.txt``
* ``tail.csv``: ``slope,intercept,r2,q_lo,q_hi``
* ``validate.csv``: ``check,status,statistic,threshold``
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import CheckFailed, DomainError, LMMError
from .estimators import ScanThresholds, fit_tail_slope, scan_critical_exponent
from .model import ModelConfig, critical_exponent
from .reports import scan_text, write_scan_csv, write_tail_csv, write_validate_csv
from .simulation import (
    SimulationPlan,
    rn_weights,
    sample_frozen_drift,
    simulate_terminal_measure,
    write_terminal_csv,
)
from .validation import run_checks

log = logging.getLogger("lmmtails")

COMMANDS = ("simulate", "moment-scan", "tail-report", "validate")
EXIT_CODES = {"E_CHECK_FAIL": 1, "E_CONFIG": 3, "E_DOMAIN": 4, "E_BRACKET": 5}


@dataclass(frozen=True)
class RunSpec:
    command: str
    config_path: str
    output_dir: str
    rate: int = 1
    horizon: float | None = None
    paths: int = 100_000
    steps_per_year: int = 64
    seed: int = 42
    antithetic: bool = False
    v_grid: tuple[float, float, int] | None = None
    measure: str = "terminal"
    source: str = "lmm"
    quantiles: tuple[float, float] = (0.99, 0.9999)
    rel_se: float = 0.1
    max_share: float = 0.05
    doubling: float = 0.1
    workers: int = 1

    def manifest(self) -> dict:
        # worker count does not change results, so it stays out of the record
        out = dataclasses.asdict(self)
        out.pop("workers")
        return out


def _resolve_horizon(spec: RunSpec, config: ModelConfig) -> float:
    h = spec.horizon if spec.horizon is not None else config.tenor.fixing_time(1)
    return float(h)


def _validate_spec(spec: RunSpec, config: ModelConfig) -> float:
    if spec.command not in COMMANDS:
        raise DomainError(f"unknown command {spec.command!r}")
    config.check_rate(spec.rate)
    h = _resolve_horizon(spec, config)
    if spec.command in ("moment-scan", "tail-report"):
        expiry = config.tenor.fixing_time(spec.rate)
        if not 0 < h <= expiry:
            raise DomainError(f"horizon {h} outside (0, T_{spec.rate - 1}={expiry}] for rate {spec.rate}")
        if spec.source == "frozen" and spec.measure != "terminal":
            raise DomainError("the frozen-drift sampler is defined under the terminal measure only")
    if spec.measure not in ("terminal", "own"):
        raise DomainError(f"unknown measure {spec.measure!r}")
    if spec.source not in ("lmm", "frozen"):
        raise DomainError(f"unknown source {spec.source!r}")
    if spec.v_grid is not None and (spec.v_grid[2] < 1 or spec.v_grid[0] <= 0):
        raise DomainError("v-grid needs lo > 0 and count >= 1")
    SimulationPlan(h, spec.steps_per_year, spec.paths, spec.seed, spec.antithetic)
    return h


def _run_dir(spec: RunSpec) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = Path(spec.output_dir) / f"{spec.command}-{stamp}-{spec.seed}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _samples(spec: RunSpec, config: ModelConfig, h: float):
    if spec.source == "frozen":
        log.info("drawing %d frozen-drift samples of F_%d(%g)", spec.paths, spec.rate, h)
        return sample_frozen_drift(config, spec.rate, h, spec.paths, spec.seed, spec.antithetic), None
    plan = SimulationPlan(h, spec.steps_per_year, spec.paths, spec.seed, spec.antithetic)
    sample = simulate_terminal_measure(config, plan, require_all_live=False, workers=spec.workers)
    w = rn_weights(sample, config, spec.rate) if spec.measure == "own" else None
    return sample.rate(spec.rate), w


def run(spec: RunSpec) -> tuple[int, Path]:
    """Execute ``spec``; returns the exit status and the run directory.

    Module errors propagate as :class:`~lmmtails.errors.LMMError`.
    """
    config = load_config(spec.config_path)
    h = _validate_spec(spec, config)
    out = _run_dir(spec)
    with open(out / "manifest.json", "w") as fh:
        json.dump(spec.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("run directory %s", out)

    if spec.command == "simulate":
        plan = SimulationPlan(h, spec.steps_per_year, spec.paths, spec.seed, spec.antithetic)
        sample = simulate_terminal_measure(config, plan, require_all_live=False, workers=spec.workers)
        write_terminal_csv(sample, out / "terminal_sample.csv")
        return 0, out

    if spec.command == "moment-scan":
        theory = critical_exponent(config.vols, spec.rate, h)
        lo, hi, count = spec.v_grid or (0.16 * theory, 2.0 * theory, 24)
        grid = np.linspace(lo, hi, int(count))
        x, w = _samples(spec, config, h)
        th = ScanThresholds(spec.rel_se, spec.max_share, spec.doubling)
        log.info("scanning %d grid points", grid.size)
        report = scan_critical_exponent(x, grid, th, weights=w, theoretical=theory)
        write_scan_csv(report, out / "scan.csv")
        label = f"rate {spec.rate}, t={h!r}, source={spec.source}, measure={spec.measure}"
        (out / "report.txt").write_text(scan_text(report, label))
        if not report.contains(theory):
            raise CheckFailed(f"bracket {report.bracket} does not contain {theory!r}")
        return 0, out

    if spec.command == "tail-report":
        x, w = _samples(spec, config, h)
        report = fit_tail_slope(x, w, *spec.quantiles)
        write_tail_csv(report, out / "tail.csv")
        return 0, out

    plan = SimulationPlan(h, spec.steps_per_year, spec.paths, spec.seed, spec.antithetic)
    rows = run_checks(config, plan, workers=spec.workers)
    write_validate_csv(rows, out / "validate.csv")
    for r in rows:
        log.info("%s %s (statistic %.4g, threshold %g)", r.status, r.check, r.statistic, r.threshold)
    failed = [r.check for r in rows if not r.passed]
    if failed:
        raise CheckFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return 0, out


def _pair(text: str, count: int, kinds):
    parts = text.split(":")
    if len(parts) != count:
        raise argparse.ArgumentTypeError(f"expected {count} ':'-separated values, got {text!r}")
    try:
        return tuple(k(p) for k, p in zip(kinds, parts))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML model configuration")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--rate", type=int, default=1)
    common.add_argument("--horizon", type=float, default=None, help="default: T_0")
    common.add_argument("--paths", type=int, default=100_000)
    common.add_argument("--steps-per-year", type=int, default=64)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--antithetic", action="store_true")
    common.add_argument(
        "--v-grid", type=lambda s: _pair(s, 3, (float, float, int)), default=None, metavar="LO:HI:COUNT"
    )
    common.add_argument("--measure", choices=("terminal", "own"), default="terminal")
    common.add_argument("--source", choices=("lmm", "frozen"), default="lmm")
    common.add_argument(
        "--quantiles", type=lambda s: _pair(s, 2, (float, float)), default=(0.99, 0.9999), metavar="LO:HI"
    )
    common.add_argument("--rel-se", type=float, default=0.1)
    common.add_argument("--max-share", type=float, default=0.05)
    common.add_argument("--doubling", type=float, default=0.1)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="lmm-tails", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    spec = RunSpec(
        command=args.command,
        config_path=args.config,
        output_dir=args.out,
        rate=args.rate,
        horizon=args.horizon,
        paths=args.paths,
        steps_per_year=args.steps_per_year,
        seed=args.seed,
        antithetic=args.antithetic,
        v_grid=args.v_grid,
        measure=args.measure,
        source=args.source,
        quantiles=args.quantiles,
        rel_se=args.rel_se,
        max_share=args.max_share,
        doubling=args.doubling,
        workers=args.workers,
    )
    try:
        status, out = run(spec)
    except LMMError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.code]
    print(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
