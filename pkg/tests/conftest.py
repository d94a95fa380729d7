import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20221016)


@pytest.fixture(scope="session")
def synth_dirs(tmp_path_factory):
    """Three small fixture datasets on disk, one per family."""
    from deepmad.synthfix import write_dataset

    root = tmp_path_factory.mktemp("synth")
    return {
        fam: write_dataset(root / fam, f"synth-{fam}", 40, 40, seed=7, family=fam, size=64)
        for fam in ("a", "b", "c")
    }
