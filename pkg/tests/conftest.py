import os

import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_configure(config):
    # keep the automorphism-count cache out of the user's home directory
    if "ISOCLASS_CACHE" not in os.environ:
        cache_dir = config.cache.mkdir("isoclass") if config.cache else None
        path = os.path.join(str(cache_dir) if cache_dir else "/tmp", "sp_order.txt")
        os.environ["ISOCLASS_CACHE"] = path


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record
