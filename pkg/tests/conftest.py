import pytest
from hypothesis import settings

# first calls pay numba compilation, so wall-clock deadlines are meaningless here
settings.register_profile("crwsim", deadline=None)
settings.load_profile("crwsim")

_ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Call with ``(number, passed, detail)``; printed in the terminal summary."""

    def record(number, passed, detail=""):
        _ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
