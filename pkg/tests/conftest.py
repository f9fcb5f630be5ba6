import numpy as np
import pytest

from rhythmdance.codec import CodecConfig, train_codec
from rhythmdance.data import SynthConfig, synth_dataset

SMALL_SYNTH = SynthConfig(n_sequences=16, T=96)
SMALL_CODEC = CodecConfig(k_cb=32, c_code=8, hidden=32, steps=300)


@pytest.fixture(scope="session")
def small_corpus():
    return synth_dataset(SMALL_SYNTH)


@pytest.fixture(scope="session")
def trained_codec(small_corpus):
    codec, curve = train_codec([s.motion for s in small_corpus], SMALL_CODEC)
    return codec, curve


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# acceptance reporting ----------------------------------------------------------------
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line and fails the test if not ok."""

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
