import numpy as np
import pytest

import acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(acceptance_log.RESULTS):
        title, passed, detail = acceptance_log.RESULTS[cid]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {cid}. {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
