import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qmlp.data import Dataset, Structure

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_water(rng, energy=True, forces=True):
    r1, r2 = rng.uniform(1.6, 2.1, 2)
    ang = np.deg2rad(rng.uniform(95, 120))
    pos = np.array([[0, 0, 0], [r1, 0, 0], [r2 * np.cos(ang), r2 * np.sin(ang), 0]])
    pos = pos + rng.normal(0, 0.05, pos.shape)
    return Structure(["O", "H", "H"], pos,
                     rng.normal(-76.0, 0.1) if energy else None,
                     rng.normal(0, 0.05, (3, 3)) if forces else None, "water")


@pytest.fixture
def water_set():
    rng = np.random.default_rng(7)
    return Dataset([random_water(rng) for _ in range(6)])


# -- acceptance summary ------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.skipped:
        reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
        _CRITERIA[number] = ("SKIPPED", title, reason.removeprefix("Skipped: "))
    elif rep.when == "call" or rep.failed:
        status = "PASS" if rep.passed else "FAIL"
        detail = getattr(item, "criterion_detail", "")
        if rep.failed:
            detail = (detail + "; " if detail else "") + str(rep.longrepr.reprcrash.message
                                                           if hasattr(rep.longrepr, "reprcrash")
                                                           else rep.longrepr).splitlines()[0]
        _CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {status:7s} {title}"
        terminalreporter.write_line(line + (f" | {detail}" if detail else ""))


@pytest.fixture
def record(request):
    """Attach a one-line measurement to the criterion's summary line."""
    def _record(text):
        request.node.criterion_detail = text
    return _record
