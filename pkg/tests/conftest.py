import pytest

from suitmatrix.workload import default_vm_catalog, sample_trace_text

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def catalog():
    return default_vm_catalog()


@pytest.fixture
def sample_text():
    return sample_trace_text()


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(label, ok, detail)``."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((label, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {label} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
