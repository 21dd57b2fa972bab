import numpy as np
import pytest

from binequiv.bayes import SamplerConfig
from binequiv.dataset import MetricDataset

FAST = SamplerConfig(chains=4, warmup=500, draws=500, seed=11)


def make_ds(values, weights=None, outcomes=None, metric="x", role="reference"):
    values = np.asarray(values, dtype=float)
    weights = np.ones(values.size) if weights is None else weights
    return MetricDataset(metric, role, values, weights, outcomes)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fast_cfg():
    return FAST


# acceptance criteria outcomes, printed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
