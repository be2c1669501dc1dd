import sys

import numpy as np
import pytest

from gtalab.oracles import small_config


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gta_cfg():
    return small_config("gta")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in module.RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
