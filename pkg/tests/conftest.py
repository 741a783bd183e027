import numpy as np
import pytest

from expou.model import ModelParams


@pytest.fixture
def base_params():
    """m = 0.1, alpha = 10, beta = 1%, rho = -0.9."""
    return ModelParams.from_beta(m=0.1, alpha=10.0, beta=0.01, rho=-0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one summary line per acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}: {detail}"
        lines.append(line)
        print(line, flush=True)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
