import re
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fgc.robot_model import default_robot  # noqa: E402
from fgc.sim import run_paired  # noqa: E402


@pytest.fixture(scope="session")
def robot():
    return default_robot()


@pytest.fixture(scope="session")
def model(robot):
    return robot[0]


@pytest.fixture(scope="session")
def env(robot):
    return robot[1]


@pytest.fixture(scope="session")
def paired_amble(robot):
    """Default 2-cycle amble, FGC on and off, with solved states kept."""
    model, env = robot
    t0 = time.perf_counter()
    on, off = run_paired(model, env, cycles=2, keep_states=True)
    return on, off, time.perf_counter() - t0


_CRITERIA: dict[int, list[tuple[str, str, str]]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "xfailed" if hasattr(report, "wasxfail") else report.outcome
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA.setdefault(int(m.group(1)), []).append((report.nodeid.split("::")[-1], outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        ok = all(o == "passed" for _, o, _ in parts)
        details = "; ".join(d if d else f"{name} {o}" for name, o, d in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {details}")
