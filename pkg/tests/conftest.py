import numpy as np
import pytest

from gpstgn.autodiff import Tensor

import acceptance_log


def pytest_configure(config):
    # small synthetic graphs often make power iteration oscillate; the
    # fallback is covered explicitly in test_graph
    config.addinivalue_line("filterwarnings", "ignore:power iteration did not converge:RuntimeWarning")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(values, name="w"):
    return Tensor(np.asarray(values, dtype=np.float64), name=name, requires_grad=True)


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, verdict, detail in sorted(acceptance_log.RESULTS):
        terminalreporter.write_line(f"criterion {criterion:>2}: {verdict}  {detail}")
