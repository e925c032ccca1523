import math

import numpy as np
import pytest

from heatlab.spaces import SpaceDescriptor, make_model_sample
from heatlab.spectral import decompose

# criterion number -> (title, outcome, detail)
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


@pytest.fixture
def detail(request):
    """Dict a test fills with the measured values shown on its acceptance line."""
    out = {}
    request.node._acceptance_detail = out
    return out


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        info = getattr(item, "_acceptance_detail", {})
        text = ", ".join(f"{k}={v}" for k, v in info.items())
        prev = ACCEPTANCE.get(number)
        ok = rep.passed and (prev is None or prev[1])
        ACCEPTANCE[number] = (title, ok, "; ".join(x for x in (prev[2] if prev else "", text) if x))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, text = ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}"
        terminalreporter.write_line(line + (f"  ({text})" if text else ""))


@pytest.fixture(scope="session")
def circle_dec():
    return decompose(make_model_sample(SpaceDescriptor.circle(2 * math.pi), 256))


@pytest.fixture(scope="session")
def circle_decs(circle_dec):
    desc = SpaceDescriptor.circle(2 * math.pi)
    return [decompose(make_model_sample(desc, 128)), circle_dec, decompose(make_model_sample(desc, 512))]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
