from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from drumchain.midi_ingest import DrumTrack

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def random_track(rng: np.random.Generator, n_frames: int = 400, density: float = 0.15,
                 max_drums: int = 3, fps: float = 50) -> DrumTrack:
    hits = {}
    for f in range(n_frames):
        if rng.random() < density:
            k = int(rng.integers(1, max_drums + 1))
            hits[f] = frozenset(int(d) for d in rng.choice(6, size=k, replace=False))
    n = (max(hits) + 1) if hits else 0
    return DrumTrack(fps=fps, n_frames=n, hits=hits)


@st.composite
def tracks(draw, max_frames: int = 200, max_drums: int = 6):
    frames = draw(st.lists(st.integers(0, max_frames - 1), unique=True, max_size=60))
    hits = {f: frozenset(draw(st.sets(st.integers(0, 5), min_size=1, max_size=max_drums))) for f in frames}
    n = (max(hits) + 1) if hits else 0
    return DrumTrack(fps=50, n_frames=n, hits=hits)
