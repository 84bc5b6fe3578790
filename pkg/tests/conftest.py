from pathlib import Path

import numpy as np
import pytest

from prefall.features import sequence_features
from prefall.synth import SynthSpec, corpus_sequences

VECTORS = Path(__file__).parent / "vectors"


@pytest.fixture(scope="session")
def vectors_dir() -> Path:
    return VECTORS


@pytest.fixture(scope="session")
def synth_features():
    """Features of the 30 + 30 default synthetic corpus."""
    return [sequence_features(s) for s in corpus_sequences(30, 30, base_seed=7)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def small_spec(**kw) -> SynthSpec:
    base = dict(duration_s=2.0, impact_time_s=1.5, onset_lead_s=0.5)
    base.update(kw)
    return SynthSpec(**base)


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
