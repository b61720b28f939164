import time

import numpy as np
import pytest

from lmmtails.model import (
    CorrelationMatrix,
    InitialCurve,
    ModelConfig,
    TenorStructure,
    VolTermStructure,
)


def make_config(dates, vol, rho, forwards, taus=None):
    m = len(dates) - 1
    vols = VolTermStructure.constant(m, vol) if np.isscalar(vol) else vol
    corr = rho if isinstance(rho, CorrelationMatrix) else CorrelationMatrix(rho)
    return ModelConfig(TenorStructure(dates, taus), vols, corr, InitialCurve(forwards))


@pytest.fixture(scope="session")
def benchmark():
    """M=2, sigma=0.2 flat, rho_12=1, tau=0.5, F(0)=0.04; rate 1 fixes at T_0=2."""
    return make_config([2.0, 2.5, 3.0], 0.2, [[1.0, 1.0], [1.0, 1.0]], [0.04, 0.04])


@pytest.fixture(scope="session")
def three_rates():
    return make_config(
        [1.0, 1.5, 2.0, 2.5],
        0.25,
        CorrelationMatrix.exponential([1.0, 1.5, 2.0], 0.3),
        [0.03, 0.035, 0.04],
    )


@pytest.fixture(scope="session")
def benchmark_sample(benchmark):
    """10^6 terminal-measure paths of the benchmark model at t=1 (64 steps/year)."""
    from lmmtails.simulation import SimulationPlan, simulate_terminal_measure

    start = time.perf_counter()
    sample = simulate_terminal_measure(benchmark, SimulationPlan(1.0, 64, 10**6, 42))
    TIMINGS["benchmark_sample"] = time.perf_counter() - start
    return sample


TIMINGS: dict[str, float] = {}
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
