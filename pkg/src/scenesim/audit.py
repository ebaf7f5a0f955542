"""Post-hoc verification of rendered scene directories.

Re-checks, from the files alone, the invariants the renderer promises: the
mix is the sample-wise sum of the stems, annotation.txt agrees with the
meta.json event list, texture beds never repeat an item back-to-back, and
for tracks rendered with zero EBR spread the re-measured event EBR matches
the annotated one.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import audio
from .audio import read_audio
from .corpus import parse_annotations
from .errors import DataError

log = logging.getLogger(__name__)

STEM_SUM_TOL_FLOAT32 = 1e-6
EBR_TOL_DB = 0.1
ANNOTATION_SYNC_TOL = 5e-7  # annotation.txt rounds seconds to 1e-6


def find_scene_dirs(root: str | Path) -> list[Path]:
    """Scene directories (meta.json next to mix.wav) under a corpus root."""
    root = Path(root)
    if not root.exists():
        raise DataError(f"no such corpus directory: {root}")
    return sorted(
        p.parent for p in root.rglob("meta.json") if (p.parent / "mix.wav").exists()
    )


def audit_scene(scene_dir: str | Path) -> list[dict]:
    """Run all checks on one scene directory; returns a list of failures."""
    scene_dir = Path(scene_dir)
    failures: list[dict] = []

    def fail(check: str, detail: str) -> None:
        failures.append({"scene": str(scene_dir), "check": check, "detail": detail})

    try:
        meta = json.loads((scene_dir / "meta.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        fail("meta", f"unreadable meta.json: {exc}")
        return failures
    mix = read_audio(scene_dir / "mix.wav")
    stems = {
        p.stem: read_audio(p) for p in sorted((scene_dir / "stems").glob("*.wav"))
    }

    # Mix equals the sample-wise stem sum (tolerance widens for PCM16 storage).
    if stems:
        total = np.zeros(len(mix))
        for stem in stems.values():
            n = min(len(stem), len(mix))
            total[:n] += stem.samples[:n]
        if meta.get("audio_format") == "pcm16":
            tol = (len(stems) + 1) * 2.0**-15
        else:
            tol = STEM_SUM_TOL_FLOAT32
        deviation = float(np.max(np.abs(total - mix.samples))) if len(mix) else 0.0
        if deviation > tol:
            fail("stem_sum", f"max |mix - sum(stems)| = {deviation:.3e} > {tol:.3e}")
    else:
        fail("stem_sum", "no stems/ directory to verify against")

    # annotation.txt must be the projection of the meta.json event list.
    events = meta.get("events", [])
    annotations = parse_annotations(scene_dir / "annotation.txt")
    if len(annotations) != len(events):
        fail(
            "annotation_sync",
            f"{len(annotations)} lines in annotation.txt vs {len(events)} meta events",
        )
    else:
        for ann, event in zip(annotations, events):
            if (
                abs(ann.onset - event["onset"]) > ANNOTATION_SYNC_TOL
                or abs(ann.offset - event["offset"]) > ANNOTATION_SYNC_TOL
                or ann.label != event["label"]
            ):
                fail(
                    "annotation_sync",
                    f"annotation {ann.onset:.6f}/{ann.label} disagrees with meta",
                )
                break

    for name, plan in meta.get("texture_plans", {}).items():
        repeats = [i for i in range(1, len(plan)) if plan[i] == plan[i - 1]]
        if repeats:
            fail("texture_repeats", f"track {name!r} repeats items at {repeats}")

    failures.extend(_audit_ebr(scene_dir, meta, stems))
    return failures


def _audit_ebr(scene_dir: Path, meta: dict, stems: dict) -> list[dict]:
    """Re-measure event EBRs against the background stem.

    Only checkable events are measured: tracks rendered with ebr_std = 0,
    events that do not overlap a neighbor on their own track and that were
    not cut short by the scene boundary.
    """
    failures: list[dict] = []
    background = meta.get("background")
    if background is None or background not in stems:
        return failures
    sr = int(meta["sample_rate"])
    duration = float(meta["duration"])
    background_rms = audio.rms(stems[background])
    if background_rms <= 0:
        return failures
    exact_tracks = {
        t["name"]
        for t in meta.get("tracks", [])
        if t.get("kind") == "event" and float(t.get("ebr_std", 0.0)) == 0.0
    }
    by_track: dict[str, list[dict]] = {}
    for event in meta.get("events", []):
        if event.get("track") in exact_tracks and event.get("ebr") is not None:
            by_track.setdefault(event["track"], []).append(event)

    for track, events in sorted(by_track.items()):
        if track not in stems:
            failures.append(
                {
                    "scene": str(scene_dir),
                    "check": "ebr",
                    "detail": f"no stem for track {track!r}",
                }
            )
            continue
        events = sorted(events, key=lambda e: e["onset"])
        for k, event in enumerate(events):
            overlaps = (k > 0 and events[k - 1]["offset"] > event["onset"]) or (
                k + 1 < len(events) and events[k + 1]["onset"] < event["offset"]
            )
            truncated = event["offset"] >= duration - 1e-6
            if overlaps or truncated:
                continue
            start = int(round(event["onset"] * sr))
            length = int(round(event["offset"] * sr)) - start
            measured = audio.rms(stems[track], start, length)
            if measured <= 0:
                failures.append(
                    {
                        "scene": str(scene_dir),
                        "check": "ebr",
                        "detail": f"silent event window at {event['onset']:.3f}s on {track!r}",
                    }
                )
                continue
            realized = audio.ebr_db(measured, background_rms)
            if abs(realized - event["ebr"]) > EBR_TOL_DB:
                failures.append(
                    {
                        "scene": str(scene_dir),
                        "check": "ebr",
                        "detail": (
                            f"event at {event['onset']:.3f}s on {track!r}: measured "
                            f"{realized:.3f} dB vs annotated {event['ebr']:.3f} dB"
                        ),
                    }
                )
    return failures


def audit_corpus(root: str | Path) -> dict:
    """Audit every scene under a corpus root; returns a summary report."""
    scene_dirs = find_scene_dirs(root)
    if not scene_dirs:
        raise DataError(f"no rendered scenes found under {root}")
    failures: list[dict] = []
    for scene_dir in scene_dirs:
        failures.extend(audit_scene(scene_dir))
    return {
        "root": str(root),
        "scenes_checked": len(scene_dirs),
        "failures": failures,
        "ok": not failures,
    }
