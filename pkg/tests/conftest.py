import numpy as np
import pytest
from hypothesis import settings

from tanglekit import DoubleTwist, GrowthSettings, find_periodic_orbits, grow_branch

settings.register_profile("tanglekit", max_examples=25, deadline=None)
settings.load_profile("tanglekit")


@pytest.fixture(scope="session")
def twist():
    """Double twist with K = L = 1 and zero-mean profiles."""
    return DoubleTwist.standard(1.0, 1.0)


@pytest.fixture(scope="session")
def saddle(twist):
    orbits = find_periodic_orbits(twist, 1, (0, 0), 16)
    return next(o for o in orbits if o.base == (0.0, 0.0))


@pytest.fixture(scope="session")
def branches30(twist, saddle):
    st = GrowthSettings(L_max=30.0)
    return {(k, s): grow_branch(saddle, k, s, st, twist) for k in ("unstable", "stable") for s in (1, -1)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bundled_run(tmp_path_factory):
    """The bundled zero_flux_tangle scenario run once with one worker: (exit code, output dir)."""
    from tanglekit.scenario import run_scenario

    out = tmp_path_factory.mktemp("bundled_w1")
    return run_scenario("zero_flux_tangle", out, workers=1), out


# -- acceptance summary: one pass/fail line per criterion --------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[report.nodeid] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (outcome, detail) in sorted(_ACCEPTANCE.items(), key=lambda kv: kv[0]):
        name = nodeid.split("::")[-1]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  {detail}")
