import numpy as np
import pytest

from slicestream.model import ScenarioConfig, VideoCatalog


@pytest.fixture
def catalog():
    return VideoCatalog()


@pytest.fixture
def small_cfg():
    """Two RSUs, a dozen vehicles, a few hundred slots."""
    return ScenarioConfig(
        num_rsus=2,
        highway_length=3464.0,
        inter_vehicle_distance=1732.0,
        duration=0.3,
        seed=7,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line per criterion, live and again in the session summary."""

    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
