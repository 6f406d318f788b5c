import json
import math
from pathlib import Path

import numpy as np
import pytest

from ultrasum.formal import TruncatedSeries, certify_norm
from ultrasum.kernel import build_kernel
from ultrasum.moments import moment_table
from ultrasum.seqcore import GevreyAlpha, build_sequence

ORACLES = Path(__file__).parent / "oracles" / "values.json"


@pytest.fixture(scope="session")
def oracle():
    with open(ORACLES) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def gev1():
    return build_sequence(GevreyAlpha(1.0), 64)


@pytest.fixture(scope="session")
def gev2():
    return build_sequence(GevreyAlpha(2.0), 64)


@pytest.fixture(scope="session")
def closed1(gev1):
    return build_kernel(gev1, 0.5, "gevrey")


@pytest.fixture(scope="session")
def constructed1(gev1):
    k = build_kernel(gev1, 0.5, "constructed")
    k.warm_cache(0.0)
    return k


@pytest.fixture(scope="session")
def closed1_moments(closed1):
    return moment_table(closed1, 64)


@pytest.fixture(scope="session")
def euler_plain():
    return TruncatedSeries([(-1) ** n * math.factorial(n) for n in range(65)])


@pytest.fixture(scope="session")
def euler_data(gev1):
    s = TruncatedSeries([(-1) ** p * math.factorial(p) ** 2 for p in range(65)],
                        "over-factorial")
    return s.with_certificate(certify_norm(s, gev1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
