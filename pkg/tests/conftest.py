from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from util import SR, build_collection, noise, tone

from scenesim.collection import load_collections


@pytest.fixture(scope="session")
def sr() -> int:
    return SR


@pytest.fixture(scope="session")
def collections_dir(tmp_path_factory) -> Path:
    """Standard desk-scale fixture set at 8 kHz.

    Events: beep-short (4 tone bursts), knock-door (3 decaying noise bursts),
    click-mouse (5 tiny clicks). Texture: hubbub-street (3 noise beds, 6 s,
    one recording session).
    """
    root = tmp_path_factory.mktemp("collections")
    rng = np.random.default_rng(900)

    beeps = [tone(f, d) for f, d in ((440, 0.25), (660, 0.3), (880, 0.35), (1100, 0.4))]
    build_collection(root, "beep-short", "event", beeps)

    knocks = []
    for k, duration in enumerate((0.2, 0.25, 0.3)):
        burst = noise(rng, duration, amp=0.6)
        envelope = np.exp(-6.0 * np.arange(burst.size) / SR)
        knocks.append(burst * envelope)
    build_collection(root, "knock-door", "event", knocks)

    clicks = [noise(rng, 0.05, amp=0.8) for _ in range(5)]
    build_collection(root, "click-mouse", "event", clicks)

    beds = [noise(rng, 6.0, amp=0.1) for _ in range(3)]
    build_collection(root, "hubbub-street", "texture", beds)
    return root


@pytest.fixture(scope="session")
def collections(collections_dir):
    return load_collections(collections_dir)
