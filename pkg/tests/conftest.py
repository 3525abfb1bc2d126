import numpy as np
import pytest

from skillcast.propensity import comparable_sample, propensity_weights
from skillcast.synth import DgpConfig, generate_panel


@pytest.fixture(scope="session")
def small_synth():
    """Small default-design panel: (panel, covariates, truth)."""
    return generate_panel(DgpConfig(n_workers=2000, n_years=12, seed=11))


@pytest.fixture(scope="session")
def small_comparable(small_synth):
    panel, cov, truth = small_synth
    weighted = propensity_weights(panel).panel
    return comparable_sample(weighted), cov, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report(capsys):
    """Record one acceptance line, echo it uncaptured and return ``ok``."""

    def _report(number, name, ok, detail):
        line = f"criterion {number:>2} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}", flush=True)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
