import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent))

import helpers  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if helpers.CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(helpers.CRITERIA):
            terminalreporter.write_line(helpers.CRITERIA[k])
