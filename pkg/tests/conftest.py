import sys

import pytest

from wipad.dcf_model import DcfParams
from wipad.phy_padding import rate_by_mbps


@pytest.fixture
def r54():
    return rate_by_mbps(54)


@pytest.fixture
def defaults():
    return DcfParams()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
