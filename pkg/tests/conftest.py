"""Shared session fixtures; the expensive pipeline stages run once per test session."""
import math

import pytest

ACCEPTANCE = {}

from ffqcrl.filterfn import FrequencyGrid
from ffqcrl.noise import default_psd
from ffqcrl.optimize import ControlProblem, initialize
from ffqcrl.quantum import TimeGrid
from ffqcrl.ripv import RipvConfig, generate_family
from ffqcrl.surrogate import TrainConfig, sample_dataset, train


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(50.0, 1000)


@pytest.fixture(scope="session")
def psd():
    return default_psd()


@pytest.fixture(scope="session")
def problem(grid, psd):
    return ControlProblem(grid, psd, FrequencyGrid.default(), math.pi)


@pytest.fixture(scope="session")
def initialized(problem):
    """``(baseline_report, ff_report)`` at theta = pi, with their wall-clock cost."""
    import time

    t0 = time.perf_counter()
    base, ff = initialize(problem)
    return base, ff, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ff_pulse(initialized):
    return initialized[1].params


@pytest.fixture(scope="session")
def family(ff_pulse, problem):
    import time

    t0 = time.perf_counter()
    record = generate_family(ff_pulse, problem, RipvConfig())
    return record, time.perf_counter() - t0


@pytest.fixture(scope="session")
def surrogate_dataset(family, problem):
    return sample_dataset(family[0], problem, n=512, seed=0).with_split(TrainConfig(), seed=0)


@pytest.fixture(scope="session")
def trained_surrogates(surrogate_dataset):
    """Lazily trained models keyed by seed, so retries only pay for what they use.

    ``get.seconds[seed]`` holds the wall-clock training cost.
    """
    import time

    cache = {}

    def get(seed):
        if seed not in cache:
            t0 = time.perf_counter()
            cache[seed] = train(surrogate_dataset, TrainConfig(), seed=seed)
            get.seconds[seed] = time.perf_counter() - t0
        return cache[seed]

    get.seconds = {}
    return get


@pytest.fixture(scope="session")
def mc_sweep(initialized, psd, grid):
    """500-sample sweep over the default strength grid for the ff, baseline and sine pulses."""
    import time

    from ffqcrl.montecarlo import run_sweep, sine_reference_pulse, strength_levels

    base, ff, _ = initialized
    pulses = {
        "ff-qcrl": (ff.params, math.pi),
        "baseline": (base.params, math.pi),
        "sine": (sine_reference_pulse(math.pi, grid), math.pi),
    }
    t0 = time.perf_counter()
    result = run_sweep(pulses, psd, strength_levels(), samples=500, seed=0, grid=grid)
    return result, time.perf_counter() - t0


@pytest.fixture
def verdict(capsys):
    """``verdict(n, ok, detail)`` records one acceptance line, prints it, then asserts ``ok``."""

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
