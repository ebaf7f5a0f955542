from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from util import SR, build_collection, noise, tone

from scenesim.collection import (
    CollectionKind,
    DrawState,
    draw_index,
    load_collection,
    load_collections,
    manifest_from_dir,
    save_manifest,
    validate_texture_sequencing,
)
from scenesim.errors import CollectionError


class TestLoadCollection:
    def test_counts_and_durations(self, tmp_path):
        path = build_collection(
            tmp_path, "beep-short", "event", [tone(440, d) for d in (0.2, 0.3, 0.4)]
        )
        collection = load_collection(path)
        assert len(collection) == 3
        assert collection.kind is CollectionKind.EVENT
        assert collection.sample_rate == SR
        assert [round(e.duration, 3) for e in collection.entries] == [0.2, 0.3, 0.4]

    def test_missing_file_names_path(self, tmp_path):
        path = build_collection(tmp_path, "beep-short", "event", [tone(440, 0.2)])
        manifest = json.loads(path.read_text())
        manifest["items"].append({"path": "gone.wav", "session_id": ""})
        path.write_text(json.dumps(manifest))
        with pytest.raises(CollectionError, match="gone.wav"):
            load_collection(path)

    def test_empty_collection(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text(json.dumps({"label": "a-b", "kind": "event", "items": []}))
        with pytest.raises(CollectionError, match="no items"):
            load_collection(path)

    def test_texture_requires_session_id(self, tmp_path):
        rng = np.random.default_rng(1)
        path = build_collection(
            tmp_path, "rain-roof", "texture", [noise(rng, 2.0)], sessions=[""]
        )
        with pytest.raises(CollectionError, match="session_id"):
            load_collection(path)

    def test_mixed_sample_rates_names_entry(self, tmp_path):
        path = build_collection(tmp_path, "beep-short", "event", [tone(440, 0.2)])
        from util import write_wav

        write_wav(tmp_path / "beep-short.wavs" / "odd.wav", tone(440, 0.2, sr=16000), sr=16000)
        manifest = json.loads(path.read_text())
        manifest["items"].append({"path": "beep-short.wavs/odd.wav", "session_id": ""})
        path.write_text(json.dumps(manifest))
        with pytest.raises(CollectionError, match="odd.wav"):
            load_collection(path)

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"label": "a-b", "kind": "melody", "items": [{"path": "x"}]}))
        with pytest.raises(CollectionError, match="melody"):
            load_collection(path)

    def test_label_form_warning(self, tmp_path, caplog):
        path = build_collection(tmp_path, "traffic", "event", [tone(440, 0.2)])
        with caplog.at_level("WARNING", logger="scenesim.collection"):
            load_collection(path)
        assert any("source-action" in r.message for r in caplog.records)

    def test_load_collections_directory(self, collections_dir):
        collections = load_collections(collections_dir)
        assert set(collections) == {"beep-short", "knock-door", "click-mouse", "hubbub-street"}


class TestDrawIndex:
    def test_singleton_always_zero_and_warns_once(self, tmp_path, caplog):
        path = build_collection(tmp_path, "lone-beep", "event", [tone(440, 0.2)])
        collection = load_collection(path)
        state = DrawState()
        rng = np.random.default_rng(0)
        with caplog.at_level("WARNING", logger="scenesim.collection"):
            draws = [draw_index(collection, state, rng) for _ in range(50)]
        assert draws == [0] * 50
        warnings = [r for r in caplog.records if "single item" in r.message]
        assert len(warnings) == 1

    def test_two_items_forced_alternation(self, tmp_path):
        path = build_collection(tmp_path, "two-beep", "event", [tone(440, 0.2), tone(660, 0.2)])
        collection = load_collection(path)
        state = DrawState(last_index=0)
        rng = np.random.default_rng(0)
        assert all(draw_index(collection, state, rng) in (0, 1) for _ in range(1))
        state = DrawState(last_index=0)
        draws = []
        for _ in range(20):
            draws.append(draw_index(collection, state, rng))
        assert draws == [1, 0] * 10

    def test_no_immediate_repeats_and_uniformity(self, collections):
        collection = collections["click-mouse"]
        state = DrawState()
        rng = np.random.default_rng(42)
        draws = [draw_index(collection, state, rng) for _ in range(10000)]
        assert all(a != b for a, b in zip(draws, draws[1:]))
        # Conditional uniformity given each previous index.
        from scipy.stats import chisquare

        for last in range(5):
            following = [b for a, b in zip(draws, draws[1:]) if a == last]
            counts = [following.count(i) for i in range(5) if i != last]
            assert chisquare(counts).pvalue > 0.01

    def test_prefer_session_restricts_draws(self, tmp_path):
        rng_data = np.random.default_rng(8)
        path = build_collection(
            tmp_path,
            "wind-trees",
            "texture",
            [noise(rng_data, 2.0) for _ in range(4)],
            sessions=["s1", "s1", "s2", "s2"],
        )
        collection = load_collection(path)
        rng = np.random.default_rng(1)
        state = DrawState(last_index=0)
        draws = {draw_index(collection, DrawState(last_index=0), rng, prefer_session="s1") for _ in range(50)}
        assert draws == {1}

    @given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=2**31))
    def test_never_repeats_last(self, n, seed):
        rng = np.random.default_rng(seed)
        last = None
        # Pure draw logic check against a lightweight stand-in collection.
        from scenesim.collection import SampleEntry, SoundCollection

        entries = tuple(SampleEntry(path=None, session_id="", duration=1.0) for _ in range(n))
        collection = SoundCollection("x-y", CollectionKind.EVENT, entries, SR)
        state = DrawState()
        for _ in range(200):
            drawn = draw_index(collection, state, rng)
            assert drawn != last or n == 1
            last = drawn


class TestValidateTextureSequencing:
    def test_alternating_ok(self):
        assert validate_texture_sequencing([0, 1, 0, 1]) == []

    def test_adjacent_repeat_position(self):
        assert validate_texture_sequencing([0, 0]) == [1]

    def test_generated_plan_is_clean(self, collections):
        collection = collections["click-mouse"]
        state = DrawState()
        rng = np.random.default_rng(3)
        plan = [draw_index(collection, state, rng) for _ in range(50)]
        assert validate_texture_sequencing(plan, collection) == []

    def test_empty_plan_rejected(self):
        with pytest.raises(ValueError):
            validate_texture_sequencing([])

    def test_out_of_range_index(self, collections):
        with pytest.raises(ValueError):
            validate_texture_sequencing([0, 99], collections["click-mouse"])


class TestManifestConvenience:
    def test_manifest_from_dir(self, tmp_path):
        from util import write_wav

        for k in range(3):
            write_wav(tmp_path / "wavs" / f"c{k}.wav", tone(440, 0.2))
        manifest = manifest_from_dir(tmp_path / "wavs", "chirp-bird", "event")
        save_manifest(manifest, tmp_path / "wavs" / "chirp-bird.json")
        collection = load_collection(tmp_path / "wavs" / "chirp-bird.json")
        assert len(collection) == 3

    def test_manifest_from_empty_dir(self, tmp_path):
        (tmp_path / "wavs").mkdir()
        with pytest.raises(CollectionError):
            manifest_from_dir(tmp_path / "wavs", "chirp-bird", "event")
