from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
IMAGES = DATA / "mnist10k-images-idx3-ubyte.gz"
LABELS = DATA / "mnist10k-labels-idx1-ubyte.gz"


@pytest.fixture(scope="session")
def mnist():
    from csenkit.harness.idx import load_idx

    if not IMAGES.exists():
        pytest.skip("MNIST IDX files not present")
    return load_idx(IMAGES, LABELS)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
