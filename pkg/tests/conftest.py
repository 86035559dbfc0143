import os
import re

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    def record(label, passed, detail):
        line = f"criterion {str(label):<3}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        def key(line):
            m = re.match(r"criterion (\d+)(\w*)", line)
            return int(m.group(1)), m.group(2)

        for line in sorted(ACCEPTANCE_LINES, key=key):
            terminalreporter.write_line(line)
