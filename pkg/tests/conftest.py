import os

import numpy as np
import pytest

from cavityglass.cavity import CavityParams, coupling_matrix_for

FULL = os.environ.get("ARTIFACT_FULL", "") not in ("", "0")


@pytest.fixture(scope="session")
def params():
    return CavityParams()


@pytest.fixture(scope="session")
def glass15(params):
    return coupling_matrix_for("spin_glass", 15, 3, params)[1]


@pytest.fixture(scope="session")
def glass3(params):
    return coupling_matrix_for("spin_glass", 3, 11, params)[1]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed after the run
_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion id")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when != "call":
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.passed:
        status = "PASS"
    elif hasattr(rep, "wasxfail"):
        status = f"FAIL (expected: {rep.wasxfail})"
    else:
        status = "FAIL"
    _CRITERIA[m.args[0]] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    scale = "full" if FULL else "reduced (set ARTIFACT_FULL=1 for full scale)"
    terminalreporter.write_line(f"scale: {scale}")
    for label in sorted(_CRITERIA, key=lambda s: (int(s.rstrip("ab")), s)):
        status, detail = _CRITERIA[label]
        terminalreporter.write_line(f"criterion {label:>3}: {status}  {detail}")
