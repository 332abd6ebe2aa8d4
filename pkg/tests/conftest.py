import numpy as np
import pytest

from hybris.channel import ChannelModel
from hybris.env import EnvConfig, default_geometry


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return EnvConfig(default_geometry(n_elements=4, n_users=2))


@pytest.fixture
def channels(small_cfg, rng):
    return ChannelModel(small_cfg.geometry, small_cfg.links).sample(rng)


# one summary line per acceptance criterion, whatever the capture mode
_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{status} {name}: {detail}")
