import numpy as np
import pytest

from diffdomain.geometry import PhaseField, make_circle, make_flower


@pytest.fixture(scope="session")
def circle():
    return make_circle()


@pytest.fixture(scope="session")
def flower():
    return make_flower()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def shell_points(domain, lo, hi, n, seed=0):
    """Uniform points of the shell lo < |d| < hi."""
    rng = np.random.default_rng(seed)
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(-0.5, 0.5, size=(8 * n, 2))
        d = np.abs(domain.signed_distance(cand))
        out = np.concatenate([out, cand[(d > lo) & (d < hi)]])
    return out[:n]


def unit_phase(domain):
    """Degenerate phase field: floor 1 makes every floored weight equal to 1."""
    return PhaseField(domain, 1 / 16, floor=1.0)


# One status line per acceptance criterion, collected by test_acceptance and
# repeated at the end of the run so it survives output capturing.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
