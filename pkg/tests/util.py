"""Shared helpers for building desk-scale audio fixtures."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from scenesim.audio import AudioClip, write_audio

SR = 8000


def tone(freq: float, duration: float, sr: int = SR, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(round(duration * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def noise(rng: np.random.Generator, duration: float, sr: int = SR, amp: float = 0.1) -> np.ndarray:
    return amp * rng.standard_normal(int(round(duration * sr)))


def write_wav(path: Path, samples: np.ndarray, sr: int = SR, fmt: str = "float32") -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_audio(path, AudioClip(samples, sr), fmt)
    return path


def build_collection(
    root: Path,
    label: str,
    kind: str,
    arrays: list[np.ndarray],
    sr: int = SR,
    sessions: list[str] | None = None,
) -> Path:
    """Write WAVs plus a manifest for one collection; returns the manifest path."""
    if sessions is None:
        sessions = ["sess-a"] * len(arrays) if kind == "texture" else [""] * len(arrays)
    wav_dir = root / f"{label}.wavs"
    items = []
    for k, (samples, session) in enumerate(zip(arrays, sessions)):
        name = f"{label}-{k:02d}.wav"
        write_wav(wav_dir / name, samples, sr)
        items.append({"path": f"{label}.wavs/{name}", "session_id": session})
    manifest = {"schema_version": 1, "label": label, "kind": kind, "items": items}
    manifest_path = root / f"{label}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


def write_reference_scene(
    scene_dir: Path,
    duration: float,
    events: list[tuple[float, float, str, float]],
    background: str,
) -> Path:
    """Write a minimal reference couple: annotation.txt + meta.json with EBRs."""
    scene_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(events, key=lambda e: (e[0], e[1], e[2]))
    lines = [f"{onset:.6f}\t{offset:.6f}\t{label}" for onset, offset, label, _ in ordered]
    (scene_dir / "annotation.txt").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )
    meta = {
        "schema_version": 1,
        "duration": duration,
        "background": background,
        "events": [
            {"onset": onset, "offset": offset, "label": label, "ebr": ebr}
            for onset, offset, label, ebr in ordered
        ],
    }
    (scene_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return scene_dir


def sha256_tree(root: Path) -> dict[str, str]:
    """Hash every file under a directory, keyed by relative posix path."""
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }
