import os

import pytest
from hypothesis import HealthCheck, settings

from qiecert.operator import ProblemSpec

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

B1 = dict(
    g="x/3 + 1",
    mu1="exp(-(t - s))",
    mu2="exp(-(t - s))",
    zeta1="exp(-s) * x / (1 + x^2)",
    zeta2="exp(-s) / (1 + x^2)",
    lam=1.0,
)

# criterion number -> (description, "PASS"/"FAIL", detail)
ACCEPTANCE = {}


def b1_spec(**over) -> ProblemSpec:
    return ProblemSpec.from_strings(**{**B1, **over})


@pytest.fixture(scope="session")
def b1():
    return b1_spec()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        desc, status, detail = ACCEPTANCE[k]
        line = f"criterion {k:2d} {status}: {desc}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
