import sys
from pathlib import Path

import numpy as np
import pytest

from crashbench import _kernels_py

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

try:
    from crashbench import _ckernels
except ImportError:  # extension not built; compiled-backend tests skip
    _ckernels = None

BACKENDS = [pytest.param(_kernels_py, id="numpy")]
BACKENDS.append(
    pytest.param(_ckernels, id="cython")
    if _ckernels is not None
    else pytest.param(None, id="cython", marks=pytest.mark.skip(reason="extension not built"))
)

ECHO_BACKEND = TESTS / "backends" / "echo_backend.py"


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def echo_command(*args):
    return [sys.executable, str(ECHO_BACKEND), *map(str, args)]


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA.append((marker.args[0], marker.args[1], rep.passed, rep.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, duration, detail in sorted(_CRITERIA):
        line = f"{'PASS' if passed else 'FAIL'}  {number:2d}. {title} ({duration:.2f} s)"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
