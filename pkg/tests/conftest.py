import pytest

_ACCEPTANCE = {}


def record(criterion, title, passed, detail):
    _ACCEPTANCE[criterion] = (title, bool(passed), detail)
    print(f"criterion {criterion} ({title}): {'PASS' if passed else 'FAIL'} | {detail}")


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
