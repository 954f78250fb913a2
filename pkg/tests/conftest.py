from __future__ import annotations

from pathlib import Path

import pytest

from ladderfolio.marketdata import SynthConfig, bundled_cpi, generate_synthetic

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def cpi():
    return bundled_cpi()


@pytest.fixture(scope="session")
def static_universe():
    """10 securities, 2 years, no churn, dividends on."""
    return generate_synthetic(SynthConfig(n_securities=10, n_years=2, membership_churn_rate=0.0, seed=11))


@pytest.fixture(scope="session")
def churn_universe():
    return generate_synthetic(SynthConfig(n_securities=12, n_years=3, membership_churn_rate=6.0, seed=5))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
