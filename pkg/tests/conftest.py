import json
import re
from pathlib import Path

import numpy as np
import pytest

from mellin_aer.video import VideoCube, generate_synthetic, random_spec

ROOT = Path(__file__).resolve().parents[1]
ACCEPTANCE_LINES: list[str] = []


def load_schemas() -> dict:
    """JSON schemas published in docs/formats.md, keyed by name."""
    text = (ROOT / "docs" / "formats.md").read_text()
    blocks = re.findall(r"<!-- schema: (\w+) -->\s*```json\n(.*?)```", text, flags=re.S)
    return {name: json.loads(body) for name, body in blocks}


@pytest.fixture(scope="session")
def schemas():
    return load_schemas()


@pytest.fixture(scope="session")
def small_clip():
    """A 16x16, 200-frame stationary textured clip."""
    return generate_synthetic(random_spec(123, width=16, height=16, num_frames=200))


def windowed(cube: VideoCube, width: float = 8.0) -> VideoCube:
    """Taper the temporal variation of ``cube`` with a centred Gaussian of sigma N/width."""
    s = cube.samples
    n = s.shape[0]
    t = np.arange(n)
    w = np.exp(-0.5 * ((t - (n - 1) / 2) / (n / width)) ** 2)[:, None, None]
    mean = s.mean(axis=0)
    return VideoCube(mean + (s - mean) * w, cube.frame_rate)


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
