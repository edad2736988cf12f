import numpy as np
import pytest

from artifact.config import load_config
from artifact.harness import load_data

_criteria: dict[int, tuple[str, str]] = {}
_notes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


def pytest_runtest_logreport(report):
    # record the call phase, or a setup failure that prevented the call
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for name, value in report.user_properties:
        if name == "criterion":
            n, title = value
            _criteria[n] = (title, "PASS" if report.passed else "FAIL")


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is not None and ("criterion", tuple(marker.args)) not in item.user_properties:
        item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, verdict = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d} {verdict}  {title}")
        for line in _notes.get(n, []):
            terminalreporter.write_line(f"               {line}")


@pytest.fixture(scope="session")
def mnist():
    """The bundled 4000/1000 MNIST sample."""
    return load_data(load_config(environ={}))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance summary line of this test."""
    marker = request.node.get_closest_marker("criterion")

    def add(text: str):
        print(text)
        if marker is not None:
            _notes.setdefault(marker.args[0], []).append(text)

    return add
