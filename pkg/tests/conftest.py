import numpy as np
import pytest
from hypothesis import settings

from fastsid import SidConfig, ball_beam, gen_excitation, identify, simulate

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bb_record():
    """Noise-free ball-beam record sized for N=10, j=1000."""
    return simulate(ball_beam(), gen_excitation(2 * 10 + 1000 - 1, 1, seed=7))


@pytest.fixture(scope="session")
def bb_result(bb_record):
    return identify(bb_record, SidConfig(10, 1000))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary ------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, verdict, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
