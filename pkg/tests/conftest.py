import numpy as np
import pytest

from forge.checks import uniform_templates

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id): acceptance criterion")


@pytest.fixture
def record(request):
    """Attach a one-line measurement to the current acceptance test."""

    def _record(detail: str):
        request.node.user_properties.append(("detail", detail))

    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    _ACCEPTANCE[mark.args[0]] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k[2:])):
        status, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:<5} {status}  {detail}")


@pytest.fixture
def uniform():
    return uniform_templates


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
