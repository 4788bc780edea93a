import os
import warnings

import pytest
from hypothesis import HealthCheck, settings

from lrdvervaat import distributions as dist
from lrdvervaat import hermite

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=15, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# (criterion id, verdict, detail) lines recorded by the acceptance module
ACCEPTANCE_LINES = []


def record_acceptance(cid, passed, detail):
    verdict = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    line = f"criterion {cid:<4} {verdict:<5} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_clipping():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="clipping negative circulant spectrum")
        yield


@pytest.fixture(scope="session")
def qc_normal():
    """G = Q_N o Phi, the identity in disguise, with F = N(0, 1)."""
    G = hermite.SubordinationSpec("quantile-compose", target=dist.normal())
    return G, G.marginal()


@pytest.fixture(scope="session")
def qc_analysis(qc_normal):
    return hermite.analyze(*qc_normal)
