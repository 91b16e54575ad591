from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def archipelago_path():
    path = DATA / "archipelago64.pgm"
    if not path.exists():
        import subprocess
        import sys

        subprocess.run([sys.executable, str(ROOT / "scripts" / "make_archipelago.py")], check=True)
    return path


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, ok: bool, detail: str, seconds: float, budget: float):
        within = seconds < budget
        status = "PASS" if ok and within else "FAIL"
        line = f"{status} criterion {number:2d}: {detail} [{seconds:.1f} s, budget {budget:g} s]"
        lines.append((number, line))
        print(line)
        assert ok, line
        assert within, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
