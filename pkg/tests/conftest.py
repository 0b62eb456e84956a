import json
import os

import numpy as np
import pytest
from hypothesis import settings

from directedit.scenes import parse_manifest

# Fixed example sequence so the suite output is reproducible run to run.
settings.register_profile("repro", derandomize=True, deadline=None)
settings.register_profile("stress", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))

# Delta conditions: the gray disk turns into a bright square.
DELTA_SCENE = {
    "canvas": {"t": 8, "h": 32, "w": 32, "c": 1},
    "background": {"kind": "constant", "value": [0.2]},
    "objects": [{"shape": "disk", "size": 4, "position": [12, 8], "appearance": [0.5], "velocity": [0, 2]}],
    "conditions": {
        "disk": {"appearance": [0.5]},
        "square": {"shape": "rectangle", "size": [9, 9], "appearance": [0.9]},
    },
}

# Small Gaussian-condition scene with a broad null, used by the DAG checks.
GAUSS_SCENE = {
    "canvas": {"t": 4, "h": 24, "w": 24, "c": 1},
    "background": {"kind": "constant", "value": [0.2]},
    "objects": [{"shape": "disk", "size": 4, "position": [11, 8], "appearance": [0.5], "velocity": [0, 1]}],
    "conditions": {
        "disk": {"appearance": [0.5], "sigma": 0.3},
        "square": {"shape": "rectangle", "size": [9, 9], "appearance": [0.9], "sigma": 0.3},
    },
    "null": {"sigma": 1.0},
}

RAMP_SCENE = {
    "canvas": {"t": 6, "h": 20, "w": 24, "c": 3},
    "background": {"kind": "ramp", "axis": "y", "low": [0.0, 0.1, 0.2], "high": [0.6, 0.7, 0.8]},
    "objects": [
        {"shape": "disk", "size": 3, "position": [6, 4], "appearance": [1.0, 0.2, 0.2], "velocity": [0, 2]},
        {"shape": "rectangle", "size": [4, 5], "position": [15, 18], "appearance": [0.1, 0.9, 0.1], "velocity": [0, -2]},
    ],
    "conditions": {"red": {"appearance": [1.0, 0.2, 0.2]}, "blue": {"appearance": [0.1, 0.1, 1.0]}},
}


@pytest.fixture
def delta_spec():
    return parse_manifest(DELTA_SCENE)


@pytest.fixture
def gauss_spec():
    return parse_manifest(GAUSS_SCENE)


@pytest.fixture
def ramp_spec():
    return parse_manifest(RAMP_SCENE)


@pytest.fixture
def scene_file(tmp_path):
    def write(doc, name="scene.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return p
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary -------------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line in the terminal summary.

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    n, title = marks
    ok = _criteria.get(n, (title, True))[1] and report.passed
    _criteria[n] = (title, ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}")
