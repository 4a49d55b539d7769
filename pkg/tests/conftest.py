import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one PASS/FAIL line per criterion -------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _criteria[report.nodeid] = (report.outcome, report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (outcome, duration, detail) in sorted(_criteria.items(), key=lambda kv: kv[0]):
        name = nodeid.split("::")[-1]
        label = name.removeprefix("test_").replace("_", " ")
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {label} ({duration:.1f}s){'  ' + detail if detail else ''}")
