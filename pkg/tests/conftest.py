import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import support  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if support.ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in support.ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
