import pytest

from brute import table


@pytest.fixture
def three_unit_table():
    # y_s = (1,2,3), y_t = 0
    return table([[[1, 0], [2, 0], [3, 0]]])


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
