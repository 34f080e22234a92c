import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cdtriplet.encoder import EncoderConfig, init_encoder  # noqa: E402

TINY = EncoderConfig(input_size=(8, 8, 1), conv_blocks=((3, 3), (4, 3)), embedding_dim=6, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_model():
    return init_encoder(TINY)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Store one pass/fail line per acceptance criterion; printed in the terminal summary."""
    def _record(number, title, passed, detail=""):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
