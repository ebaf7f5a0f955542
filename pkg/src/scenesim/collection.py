"""Sound collections: manifest loading, validation and constrained draws.

A collection is a labeled group of recordings of one source-action, of kind
"event" (discrete occurrences) or "texture" (bed material). Draws are
uniform with the constraint that the same item is never picked twice in a
row within one track.
"""
from __future__ import annotations

import enum
import functools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip, read_audio
from .errors import AudioFormatError, CollectionError

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1


class CollectionKind(enum.Enum):
    EVENT = "event"
    TEXTURE = "texture"

    @classmethod
    def parse(cls, value: str) -> "CollectionKind":
        try:
            return cls(value.lower())
        except ValueError:
            raise CollectionError(
                f"unknown collection kind {value!r}; expected 'event' or 'texture'"
            ) from None


@dataclass(frozen=True)
class SampleEntry:
    path: Path
    session_id: str
    duration: float


@dataclass(frozen=True)
class SoundCollection:
    label: str
    kind: CollectionKind
    entries: tuple[SampleEntry, ...]
    sample_rate: int

    def __len__(self) -> int:
        return len(self.entries)

    def clip(self, index: int) -> AudioClip:
        return _load_clip(str(self.entries[index].path))


@dataclass
class DrawState:
    """Per-track draw memory; never share one state across tracks."""

    last_index: int | None = None
    singleton_warned: bool = field(default=False, repr=False)


@functools.lru_cache(maxsize=256)
def _load_clip(path: str) -> AudioClip:
    return read_audio(path)


def load_collection(manifest_path: str | Path) -> SoundCollection:
    """Load and validate one collection manifest (JSON).

    Checks that every referenced file exists and is readable, that all items
    share a sample rate, and that texture items carry a recording session id.
    Durations are cached on the entries.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise CollectionError(f"no such manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CollectionError(f"{manifest_path}: invalid JSON: {exc}") from exc

    for key in ("label", "kind", "items"):
        if key not in manifest:
            raise CollectionError(f"{manifest_path}: missing required key {key!r}")
    label = str(manifest["label"])
    kind = CollectionKind.parse(str(manifest["kind"]))
    items = manifest["items"]
    if not items:
        raise CollectionError(f"{manifest_path}: collection {label!r} has no items")
    if "-" not in label:
        log.warning(
            "collection label %r is not of the recommended 'source-action' form", label
        )

    base = manifest_path.parent
    entries = []
    sample_rate = None
    for item in items:
        rel = item["path"]
        path = (base / rel).resolve()
        session_id = str(item.get("session_id", ""))
        if kind is CollectionKind.TEXTURE and not session_id:
            raise CollectionError(
                f"{manifest_path}: texture item {rel!r} has no session_id"
            )
        try:
            clip = _load_clip(str(path))
        except AudioFormatError as exc:
            raise CollectionError(f"{manifest_path}: item {rel!r}: {exc}") from exc
        if sample_rate is None:
            sample_rate = clip.sample_rate
        elif clip.sample_rate != sample_rate:
            raise CollectionError(
                f"{manifest_path}: item {rel!r} has sample rate {clip.sample_rate} Hz, "
                f"expected {sample_rate} Hz"
            )
        entries.append(SampleEntry(path=path, session_id=session_id, duration=clip.duration))

    if len(entries) == 1:
        log.warning(
            "collection %r has a single item; consecutive repeats are unavoidable", label
        )
    return SoundCollection(
        label=label, kind=kind, entries=tuple(entries), sample_rate=int(sample_rate)
    )


def load_collections(directory: str | Path) -> dict[str, SoundCollection]:
    """Load every *.json manifest in a directory, keyed by collection label."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CollectionError(f"no such collections directory: {directory}")
    collections: dict[str, SoundCollection] = {}
    for manifest_path in sorted(directory.glob("*.json")):
        collection = load_collection(manifest_path)
        if collection.label in collections:
            raise CollectionError(
                f"duplicate collection label {collection.label!r} in {directory}"
            )
        collections[collection.label] = collection
    if not collections:
        raise CollectionError(f"no collection manifests (*.json) found in {directory}")
    return collections


def manifest_from_dir(
    wav_dir: str | Path, label: str, kind: str, session_id: str = ""
) -> dict:
    """Build a manifest dict for a flat directory of WAV files (convenience)."""
    wav_dir = Path(wav_dir)
    paths = sorted(wav_dir.glob("*.wav"))
    if not paths:
        raise CollectionError(f"no .wav files in {wav_dir}")
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "label": label,
        "kind": CollectionKind.parse(kind).value,
        "items": [{"path": p.name, "session_id": session_id} for p in paths],
    }


def save_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def draw_index(
    collection: SoundCollection,
    state: DrawState,
    rng: np.random.Generator,
    prefer_session: str | None = None,
) -> int:
    """Draw an item index uniformly, never repeating the previous draw.

    With no history the draw is uniform over all items; afterwards it is
    uniform over the items other than the last one. When `prefer_session`
    is given and other items from that recording session are available, the
    draw is restricted to them (used for texture beds).
    """
    n = len(collection)
    last = state.last_index
    if n == 1:
        if not state.singleton_warned:
            log.warning(
                "collection %r has one item; repeating it back-to-back", collection.label
            )
            state.singleton_warned = True
        state.last_index = 0
        return 0
    allowed = [i for i in range(n) if i != last]
    if prefer_session is not None:
        same_session = [
            i for i in allowed if collection.entries[i].session_id == prefer_session
        ]
        if same_session:
            allowed = same_session
    index = allowed[int(rng.integers(len(allowed)))]
    state.last_index = index
    return index


def validate_texture_sequencing(
    plan: list[int], collection: SoundCollection | None = None
) -> list[int]:
    """Audit an item-index sequence; returns positions of consecutive repeats.

    An empty return means the plan is valid. If a collection is given, item
    indices are also range-checked.
    """
    if not plan:
        raise ValueError("plan must be non-empty")
    if collection is not None:
        for pos, idx in enumerate(plan):
            if not 0 <= idx < len(collection):
                raise ValueError(f"plan position {pos}: index {idx} out of range")
    return [pos for pos in range(1, len(plan)) if plan[pos] == plan[pos - 1]]
