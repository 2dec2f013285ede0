"""Collects acceptance outcomes and prints one line per criterion."""
import pytest

_OUTCOMES: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call" and not report.failed:
        return
    number, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else "FAIL"
    if report.when == "call" or number not in _OUTCOMES:
        _OUTCOMES[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        status, title, detail = _OUTCOMES[number]
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
    passed = sum(s == "PASS" for s, _, _ in _OUTCOMES.values())
    terminalreporter.write_line(f"{passed}/{len(_OUTCOMES)} acceptance criteria passed")


@pytest.fixture
def detail(request):
    """Attach a measured value to the acceptance summary line."""
    def add(text: str) -> None:
        request.node.user_properties.append(("detail", text))
        print(text)
    return add
