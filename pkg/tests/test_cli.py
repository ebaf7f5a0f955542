from __future__ import annotations

import json

import numpy as np
import pytest

from util import SR, sha256_tree, write_reference_scene, write_wav

from scenesim.cli import main


@pytest.fixture
def scene_spec_path(tmp_path):
    spec = {
        "schema_version": 1,
        "duration": 8.0,
        "sample_rate": SR,
        "seed": 42,
        "background": "hubbub-street",
        "tracks": [
            {"collection": "hubbub-street", "kind": "texture", "start_time": 0.0, "end_time": 8.0},
            {
                "collection": "beep-short",
                "kind": "event",
                "start_time": 0.0,
                "end_time": 8.0,
                "ebr_mean": -3.0,
                "ebr_std": 1.0,
                "interval_mean": 1.5,
                "interval_std": 0.3,
            },
        ],
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(spec))
    return path


@pytest.fixture
def refs_dir(tmp_path):
    root = tmp_path / "refs"
    for k in range(2):
        write_reference_scene(
            root / f"couple{k:02d}",
            duration=4.0,
            events=[
                (0.5, 0.75, "beep-short", -3.0),
                (2.0, 2.25, "knock-door", -6.0),
            ],
            background="hubbub-street",
        )
    return root


class TestGenerate:
    def test_artifacts_present(self, scene_spec_path, collections_dir, tmp_path, capsys):
        out = tmp_path / "scene-out"
        code = main(
            [
                "generate",
                "--spec", str(scene_spec_path),
                "--collections", str(collections_dir),
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "mix.wav").exists()
        assert (out / "annotation.txt").exists()
        assert (out / "meta.json").exists()
        assert list((out / "stems").glob("*.wav"))
        meta = json.loads((out / "meta.json").read_text())
        assert meta["cli"]["seed"] == 42
        assert meta["tool_version"]

    def test_unknown_collection_label_exits_2(self, tmp_path, collections_dir, capsys):
        spec = {
            "duration": 4.0,
            "sample_rate": SR,
            "background": "hubbub-street",
            "tracks": [
                {"collection": "hubbub-street", "kind": "texture", "start_time": 0, "end_time": 4},
                {"collection": "siren-far", "kind": "event", "start_time": 0, "end_time": 4,
                 "interval_mean": 1.0},
            ],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(spec))
        code = main(
            ["generate", "--spec", str(path), "--collections", str(collections_dir),
             "--out", str(tmp_path / "out")]
        )
        assert code == 2
        assert "siren-far" in capsys.readouterr().err

    def test_same_seed_identical_files(self, scene_spec_path, collections_dir, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(
                ["generate", "--spec", str(scene_spec_path), "--collections",
                 str(collections_dir), "--out", str(out), "--seed", "7"]
            ) == 0
            outs.append(sha256_tree(out))
        # meta.json records the differing --out paths; audio and annotations
        # must be byte-identical.
        for tree in outs:
            tree.pop("meta.json")
        assert outs[0] == outs[1]


class TestCorpus:
    def test_offset_subcorpora_layout(self, refs_dir, collections_dir, tmp_path):
        out = tmp_path / "corpus"
        code = main(
            ["corpus", "--mode", "instance", "--refs", str(refs_dir),
             "--collections", str(collections_dir), "--out", str(out),
             "--offsets", "6,0,-6,-12", "--replications", "2", "--seed", "3"]
        )
        assert code == 0
        for name in ("ebr_6", "ebr_0", "ebr_-6", "ebr_-12"):
            assert (out / name).is_dir()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["scene_count"] == 2 * 2 * 4
        assert (out / "meta.json").exists()

    def test_abstract_mode_runs(self, refs_dir, collections_dir, tmp_path):
        out = tmp_path / "corpus"
        code = main(
            ["corpus", "--mode", "abstract", "--refs", str(refs_dir),
             "--collections", str(collections_dir), "--out", str(out), "--seed", "3"]
        )
        assert code == 0
        assert json.loads((out / "manifest.json").read_text())["scene_count"] == 2


class TestStats:
    def test_params_emitted(self, refs_dir, tmp_path, capsys):
        out = tmp_path / "stats"
        code = main(["stats", "--refs", str(refs_dir), "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "params.json").read_text())
        assert payload["couples"]["couple00"]["beep-short"]["event_count"] == 1
        assert (out / "params.txt").exists()
        assert "beep-short" in capsys.readouterr().out


class TestEval:
    def make_corpus(self, refs_dir, collections_dir, tmp_path, offsets="0"):
        out = tmp_path / "corpus"
        assert main(
            ["corpus", "--mode", "instance", "--refs", str(refs_dir),
             "--collections", str(collections_dir), "--out", str(out),
             "--offsets", offsets, "--seed", "3"]
        ) == 0
        return out

    def test_self_evaluation_scores_one(self, refs_dir, collections_dir, tmp_path, capsys):
        corpus_dir = self.make_corpus(refs_dir, collections_dir, tmp_path)
        out = tmp_path / "eval"
        code = main(
            ["eval", "--ref", str(corpus_dir), "--det", str(corpus_dir), "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["report"]["cwebf"] == 1.0

    def test_empty_detections_score_zero(self, refs_dir, collections_dir, tmp_path):
        corpus_dir = self.make_corpus(refs_dir, collections_dir, tmp_path)
        empty = tmp_path / "empty"
        empty.mkdir()
        out = tmp_path / "eval"
        code = main(["eval", "--ref", str(corpus_dir), "--det", str(empty), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["report"]["cwebf"] == 0.0
        classes = report["report"]["classes"]
        assert all(s["tp"] == 0 and s["fp"] == 0 and s["fn"] > 0 for s in classes.values())

    def test_offset_sweep_writes_curve(self, refs_dir, collections_dir, tmp_path):
        corpus_dir = self.make_corpus(refs_dir, collections_dir, tmp_path, offsets="6,0,-6,-12")
        out = tmp_path / "eval"
        code = main(
            ["eval", "--ref", str(corpus_dir), "--det", str(corpus_dir), "--out", str(out)]
        )
        assert code == 0
        curve = (out / "curve.csv").read_text().splitlines()
        assert curve[0] == "ebr_offset,cwebf,scenes"
        assert len(curve) == 5

    def test_dump_pairs(self, refs_dir, collections_dir, tmp_path):
        corpus_dir = self.make_corpus(refs_dir, collections_dir, tmp_path)
        out = tmp_path / "eval"
        code = main(
            ["eval", "--ref", str(corpus_dir), "--det", str(corpus_dir),
             "--out", str(out), "--dump-pairs"]
        )
        assert code == 0
        pairs = json.loads((out / "pairs.json").read_text())
        assert pairs
        assert all(p["ref_onset"] == p["det_onset"] for p in pairs)

    def test_malformed_detection_file_exits_3(self, refs_dir, collections_dir, tmp_path, capsys):
        corpus_dir = self.make_corpus(refs_dir, collections_dir, tmp_path)
        det = tmp_path / "det"
        scene_rel = json.loads((corpus_dir / "manifest.json").read_text())["scenes"][0]["path"]
        bad = det / scene_rel / "annotation.txt"
        bad.parent.mkdir(parents=True)
        bad.write_text("not\tenough\n")
        code = main(["eval", "--ref", str(corpus_dir), "--det", str(det), "--out", str(tmp_path / "e")])
        assert code == 3


class TestAudit:
    def test_clean_corpus_passes(self, refs_dir, collections_dir, tmp_path, capsys):
        corpus_dir = tmp_path / "corpus"
        assert main(
            ["corpus", "--mode", "instance", "--refs", str(refs_dir),
             "--collections", str(collections_dir), "--out", str(corpus_dir), "--seed", "3"]
        ) == 0
        out = tmp_path / "audit"
        code = main(["audit", "--corpus", str(corpus_dir), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "audit.json").read_text())
        assert report["ok"] is True
        assert report["scenes_checked"] == 2

    def test_tampered_stem_fails_naming_scene(self, refs_dir, collections_dir, tmp_path, capsys):
        corpus_dir = tmp_path / "corpus"
        assert main(
            ["corpus", "--mode", "instance", "--refs", str(refs_dir),
             "--collections", str(collections_dir), "--out", str(corpus_dir), "--seed", "3"]
        ) == 0
        victim = corpus_dir / "ebr_0" / "couple00" / "rep00"
        stem_path = next((victim / "stems").glob("*.wav"))
        write_wav(stem_path, np.zeros(4 * SR), SR)
        out = tmp_path / "audit"
        code = main(["audit", "--corpus", str(corpus_dir), "--out", str(out)])
        assert code == 4
        err = capsys.readouterr().err
        assert "stem_sum" in err
        assert "couple00" in err
