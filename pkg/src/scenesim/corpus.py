"""Corpus construction from annotated reference scenes.

Two processes build simulated scenes out of a reference corpus:

* instance: clone each reference annotation (onset, duration, EBR), placing
  a randomly drawn clip of the same class; clips running long are cut to the
  annotation length when they exceed it by at least 0.5 s.
* abstract: estimate per-class Gaussian parameters (EBR, inter-onset
  interval, duration) from the reference and re-draw the structure from the
  morphological model; clips longer than duration_mean + duration_std + 5 s
  are truncated to that bound.

A corpus is couples x replications x EBR offsets, laid out as
``<out>/ebr_<offset>/<couple>/rep<NN>/{mix.wav, stems/, annotation.txt,
meta.json}`` with a deterministic manifest at the root.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import audio
from ._version import __version__
from .audio import AudioClip, read_audio, write_audio
from .collection import CollectionKind, DrawState, SoundCollection, draw_index
from .errors import ConfigError, DataError
from .sequencer import (
    DEFAULT_EVENT_FADE,
    DEFAULT_TEXTURE_OVERLAP,
    SCHEMA_VERSION,
    EventAnnotation,
    SceneOutput,
    SceneSpec,
    TrackSpec,
    derive_seed,
    generate_texture_track,
    render_event_samples,
    render_scene,
)

log = logging.getLogger(__name__)

# Cut a drawn clip to the annotation length when it runs at least this much
# longer than the annotation ("of at least" includes equality).
INSTANCE_TRIM_MARGIN = 0.5
# Abstract-mode clip duration bound beyond the class duration statistics.
ABSTRACT_DURATION_SLACK = 5.0


def parse_annotations(path: str | Path) -> list[EventAnnotation]:
    """Parse a tab-separated annotation file: onset, offset, label per line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such annotation file: {path}")
    annotations = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(
                f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        try:
            annotations.append(
                EventAnnotation(float(fields[0]), float(fields[1]), fields[2].strip())
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return annotations


def write_annotations(path: str | Path, annotations: list[EventAnnotation]) -> None:
    """Write annotations sorted by onset, seconds with six decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(annotations, key=lambda a: (a.onset, a.offset, a.label))
    lines = [f"{a.onset:.6f}\t{a.offset:.6f}\t{a.label}" for a in ordered]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_scene(
    output: SceneOutput,
    out_dir: str | Path,
    audio_format: str = "float32",
    extra_meta: dict | None = None,
) -> None:
    """Materialize a rendered scene: mix.wav, stems/, annotation.txt, meta.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_audio(out_dir / "mix.wav", output.mix, audio_format)
    for name, stem in output.stems.items():
        write_audio(out_dir / "stems" / f"{name}.wav", stem, audio_format)
    write_annotations(out_dir / "annotation.txt", output.annotations)
    meta = dict(output.metadata)
    meta["audio_format"] = audio_format
    meta["tool_version"] = __version__
    if extra_meta:
        meta.update(extra_meta)
    (out_dir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8"
    )


@dataclass
class ReferenceScene:
    """One reference scene-annotator couple.

    Audio is optional and only needed when per-event EBRs are absent and must
    be estimated from an event-free background window.
    """

    name: str
    duration: float
    annotations: list[EventAnnotation]
    background_label: str | None = None
    audio: AudioClip | None = None
    background_window: tuple[float, float] | None = None

    @classmethod
    def load(cls, scene_dir: str | Path) -> "ReferenceScene":
        """Load a scene directory: meta.json (preferred, carries duration,
        background and EBRs) plus annotation.txt, and mix.wav if present."""
        scene_dir = Path(scene_dir)
        meta_path = scene_dir / "meta.json"
        ann_path = scene_dir / "annotation.txt"
        background_label = None
        background_window = None
        if meta_path.exists():
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise DataError(f"{meta_path}: invalid JSON: {exc}") from exc
            duration = float(meta["duration"])
            background_label = meta.get("background")
            if meta.get("background_window") is not None:
                lo, hi = meta["background_window"]
                background_window = (float(lo), float(hi))
            events = meta.get("events")
            if events is not None:
                annotations = [
                    EventAnnotation(
                        float(e["onset"]),
                        float(e["offset"]),
                        str(e["label"]),
                        None if e.get("ebr") is None else float(e["ebr"]),
                    )
                    for e in events
                ]
            else:
                annotations = parse_annotations(ann_path)
        else:
            annotations = parse_annotations(ann_path)
            duration = math.ceil(max((a.offset for a in annotations), default=1.0))
            log.warning(
                "%s has no meta.json; assuming %.0fs duration and no background label",
                scene_dir,
                duration,
            )
        clip = None
        if (scene_dir / "mix.wav").exists():
            clip = read_audio(scene_dir / "mix.wav")
        return cls(
            name=scene_dir.name,
            duration=duration,
            annotations=annotations,
            background_label=background_label,
            audio=clip,
            background_window=background_window,
        )


def load_reference_corpus(refs_dir: str | Path) -> list[ReferenceScene]:
    """Load every scene directory (one per couple) under a reference root."""
    refs_dir = Path(refs_dir)
    if not refs_dir.is_dir():
        raise DataError(f"no such reference directory: {refs_dir}")
    scenes = []
    for child in sorted(p for p in refs_dir.iterdir() if p.is_dir()):
        if (child / "annotation.txt").exists() or (child / "meta.json").exists():
            scenes.append(ReferenceScene.load(child))
    if not scenes:
        raise DataError(f"no reference scenes found under {refs_dir}")
    return scenes


def estimate_event_ebr(scene: ReferenceScene, annotation: EventAnnotation) -> float:
    """Approximate an event's EBR from the scene audio.

    The background level comes from the scene's event-free window; the event
    window inevitably contains background as well, so this is an upper-biased
    approximation.
    """
    if scene.audio is None:
        raise DataError(f"reference {scene.name!r} has no audio to estimate EBRs from")
    if scene.background_window is None:
        raise DataError(f"reference {scene.name!r} has no event-free background window")
    lo, hi = scene.background_window
    if hi - lo < 1.0:
        raise ValueError(
            f"background window [{lo}, {hi}] must be at least 1 s long"
        )
    sr = scene.audio.sample_rate
    b_start, b_len = int(round(lo * sr)), int(round((hi - lo) * sr))
    background_rms = audio.rms(scene.audio, b_start, b_len)
    e_start = int(round(annotation.onset * sr))
    e_len = int(round(annotation.offset * sr)) - e_start
    event_rms = audio.rms(scene.audio, e_start, e_len)
    return audio.ebr_db(event_rms, background_rms)


def ensure_reference_ebrs(scene: ReferenceScene) -> ReferenceScene:
    """Return the scene with every annotation carrying an EBR, estimating
    missing ones from the audio."""
    if all(a.ebr is not None for a in scene.annotations):
        return scene
    filled = [
        a if a.ebr is not None else replace(a, ebr=estimate_event_ebr(scene, a))
        for a in scene.annotations
    ]
    return replace(scene, annotations=filled)


@dataclass(frozen=True)
class ClassParams:
    """Per-class morphological statistics estimated from one reference couple."""

    label: str
    event_count: int
    ebr_mean: float
    ebr_std: float
    interval_mean: float
    interval_std: float
    duration_mean: float
    duration_std: float
    start_time: float
    end_time: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "event_count": self.event_count,
            "ebr_mean": self.ebr_mean,
            "ebr_std": self.ebr_std,
            "interval_mean": self.interval_mean,
            "interval_std": self.interval_std,
            "duration_mean": self.duration_mean,
            "duration_std": self.duration_std,
            "start_time": self.start_time,
            "end_time": self.end_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    # Unbiased (n-1) std; a single sample degenerates to 0.
    if values.size == 0:
        return 0.0, 0.0
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return mean, std


def estimate_class_params(
    scenes: list[ReferenceScene],
) -> dict[str, dict[str, ClassParams]]:
    """Estimate per-class parameters for every scene-annotator couple.

    EBR statistics use the annotation EBRs (estimated from audio when absent),
    intervals are between consecutive onsets of the same class within the
    scene, and the track span is the first/last activity of the class.
    """
    result: dict[str, dict[str, ClassParams]] = {}
    for scene in scenes:
        scene = ensure_reference_ebrs(scene)
        by_label: dict[str, list[EventAnnotation]] = {}
        for ann in sorted(scene.annotations, key=lambda a: a.onset):
            by_label.setdefault(ann.label, []).append(ann)
        params: dict[str, ClassParams] = {}
        for label, anns in sorted(by_label.items()):
            onsets = np.array([a.onset for a in anns])
            ebr_mean, ebr_std = _mean_std(np.array([a.ebr for a in anns]))
            interval_mean, interval_std = _mean_std(np.diff(onsets))
            duration_mean, duration_std = _mean_std(
                np.array([a.offset - a.onset for a in anns])
            )
            if len(anns) == 1:
                log.warning(
                    "couple %r class %r has a single event; stds set to 0",
                    scene.name,
                    label,
                )
            params[label] = ClassParams(
                label=label,
                event_count=len(anns),
                ebr_mean=ebr_mean,
                ebr_std=ebr_std,
                interval_mean=interval_mean,
                interval_std=interval_std,
                duration_mean=duration_mean,
                duration_std=duration_std,
                start_time=float(onsets[0]),
                end_time=float(max(a.offset for a in anns)),
            )
        result[scene.name] = params
    return result


def _check_class_collections(
    labels: set[str], collections: dict[str, SoundCollection]
) -> None:
    missing = sorted(label for label in labels if label not in collections)
    if missing:
        raise ConfigError(f"missing collections for classes: {', '.join(missing)}")
    not_event = sorted(
        label
        for label in labels
        if collections[label].kind is not CollectionKind.EVENT
    )
    if not_event:
        raise ConfigError(
            f"collections are not event collections: {', '.join(not_event)}"
        )


def _background_collection(
    background_label: str | None, collections: dict[str, SoundCollection]
) -> SoundCollection:
    if background_label is None:
        raise ConfigError("reference scene does not designate a background collection")
    if background_label not in collections:
        raise ConfigError(f"unknown background collection {background_label!r}")
    background = collections[background_label]
    if background.kind is not CollectionKind.TEXTURE:
        raise ConfigError(f"background {background_label!r} is not a texture collection")
    return background


def build_instance_scene(
    ref: ReferenceScene,
    collections: dict[str, SoundCollection],
    ebr_offset: float = 0.0,
    seed: int = 0,
    *,
    sample_rate: int | None = None,
    event_fade: float = DEFAULT_EVENT_FADE,
    texture_overlap: float = DEFAULT_TEXTURE_OVERLAP,
) -> SceneOutput:
    """Clone a reference scene: same onsets and EBRs (plus `ebr_offset`),
    random same-class clips, background regenerated from its collection."""
    background = _background_collection(ref.background_label, collections)
    labels = {a.label for a in ref.annotations}
    _check_class_collections(labels, collections)
    ref = ensure_reference_ebrs(ref)
    sr = sample_rate or background.sample_rate
    scene_len = int(round(ref.duration * sr))
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    bg_track = TrackSpec(
        collection=background.label,
        kind=CollectionKind.TEXTURE,
        start_time=0.0,
        end_time=ref.duration,
    )
    bg_stem, bg_plan = generate_texture_track(
        bg_track,
        background,
        rng,
        sample_rate=sr,
        scene_duration=ref.duration,
        overlap=texture_overlap,
        fade=event_fade,
    )
    background_rms = audio.rms(bg_stem)
    if background_rms <= 0:
        raise ConfigError(f"background {background.label!r} rendered silent")

    states = {label: DrawState() for label in labels}
    buffers = {label: np.zeros(scene_len) for label in sorted(labels)}
    annotations: list[EventAnnotation] = []
    events_meta: list[dict] = []
    for ann in sorted(ref.annotations, key=lambda a: (a.onset, a.label)):
        coll = collections[ann.label]
        if coll.sample_rate != sr:
            raise ConfigError(
                f"collection {ann.label!r} is at {coll.sample_rate} Hz, scene "
                f"wants {sr} Hz (resampling is unsupported)"
            )
        index = draw_index(coll, states[ann.label], rng)
        clip = coll.clip(index)
        ann_duration = ann.offset - ann.onset
        max_duration = None
        if clip.duration - ann_duration >= INSTANCE_TRIM_MARGIN:
            max_duration = ann_duration
        target_ebr = ann.ebr + ebr_offset
        event = render_event_samples(
            clip, event_fade, background_rms, target_ebr, max_duration
        )
        start_n = int(round(ann.onset * sr))
        if start_n >= scene_len:
            log.warning(
                "reference %r: event at %.3fs lies beyond the scene; skipped",
                ref.name,
                ann.onset,
            )
            continue
        end_n = min(start_n + len(event), scene_len)
        buffers[ann.label][start_n:end_n] += event[: end_n - start_n]
        placed = EventAnnotation(start_n / sr, end_n / sr, ann.label, target_ebr)
        annotations.append(placed)
        events_meta.append(
            {
                "onset": placed.onset,
                "offset": placed.offset,
                "label": placed.label,
                "ebr": placed.ebr,
                "track": placed.label,
            }
        )

    stems: dict[str, AudioClip] = {background.label: bg_stem}
    for label in sorted(labels):
        stems[label] = AudioClip(buffers[label], sr)
    mixed = audio.mix(list(stems.values()), scene_len)

    provenance = {
        "mode": "instance",
        "reference": ref.name,
        "ebr_offset": ebr_offset,
        "sample_rate": sr,
        "duration": ref.duration,
        "background": background.label,
        "events": [
            {"onset": a.onset, "offset": a.offset, "label": a.label, "ebr": a.ebr}
            for a in ref.annotations
        ],
    }
    spec_hash = hashlib.sha256(
        json.dumps(provenance, sort_keys=True).encode("utf-8")
    ).hexdigest()

    tracks_meta = [dict(bg_track.to_dict(), name=background.label)]
    tracks_meta += [
        {
            "name": label,
            "collection": label,
            "kind": CollectionKind.EVENT.value,
            "start_time": 0.0,
            "end_time": ref.duration,
            "ebr_mean": 0.0,
            "ebr_std": 0.0,
            "interval_mean": 0.0,
            "interval_std": 0.0,
        }
        for label in sorted(labels)
    ]
    metadata = {
        "schema_version": SCHEMA_VERSION,
        "generator": "scenesim",
        "mode": "instance",
        "reference": ref.name,
        "ebr_offset": ebr_offset,
        "seed": seed,
        "spec_hash": spec_hash,
        "sample_rate": sr,
        "duration": ref.duration,
        "background": background.label,
        "global_scale": 1.0,
        "tracks": tracks_meta,
        "texture_plans": {background.label: bg_plan},
        "events": events_meta,
    }
    return SceneOutput(mix=mixed, stems=stems, annotations=annotations, metadata=metadata)


def build_abstract_scene(
    params: dict[str, ClassParams],
    collections: dict[str, SoundCollection],
    seed: int = 0,
    *,
    duration: float,
    background_label: str,
    ebr_offset: float = 0.0,
    sample_rate: int | None = None,
    event_fade: float = DEFAULT_EVENT_FADE,
    texture_overlap: float = DEFAULT_TEXTURE_OVERLAP,
    reference_name: str | None = None,
) -> SceneOutput:
    """Re-draw a scene from estimated class parameters via the morphological
    model; clips longer than duration_mean + duration_std + 5 s are truncated
    to that bound before placement."""
    background = _background_collection(background_label, collections)
    _check_class_collections(set(params), collections)
    sr = sample_rate or background.sample_rate

    tracks = [
        TrackSpec(
            collection=background.label,
            kind=CollectionKind.TEXTURE,
            start_time=0.0,
            end_time=duration,
        )
    ]
    for label in sorted(params):
        p = params[label]
        start = max(0.0, p.start_time)
        end = min(p.end_time, duration)
        if end <= start:
            log.warning("class %r activity lies outside the scene; skipped", label)
            continue
        interval_mean, interval_std = p.interval_mean, p.interval_std
        if p.event_count < 2 or (interval_std == 0 and interval_mean <= 0.001):
            # No usable interval statistics: reproduce a single placement.
            interval_mean, interval_std = (end - start) + 1.0, 0.0
        tracks.append(
            TrackSpec(
                collection=label,
                kind=CollectionKind.EVENT,
                start_time=start,
                end_time=end,
                ebr_mean=p.ebr_mean + ebr_offset,
                ebr_std=p.ebr_std,
                interval_mean=interval_mean,
                interval_std=interval_std,
                max_event_duration=p.duration_mean + p.duration_std + ABSTRACT_DURATION_SLACK,
            )
        )
    spec = SceneSpec(
        duration=duration,
        tracks=tuple(tracks),
        background=background.label,
        sample_rate=sr,
        seed=seed,
        event_fade=event_fade,
        texture_overlap=texture_overlap,
    )
    output = render_scene(spec, collections)
    output.metadata.update(
        {
            "mode": "abstract",
            "ebr_offset": ebr_offset,
            "reference": reference_name,
            "class_params": {label: p.to_dict() for label, p in params.items()},
        }
    )
    return output


@dataclass(frozen=True)
class CorpusPlan:
    """What to build: the process, the EBR offset sweep and the replication."""

    mode: str
    ebr_offsets: tuple[float, ...] = (0.0,)
    replications: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("instance", "abstract"):
            raise ConfigError(f"unknown corpus mode {self.mode!r}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if not self.ebr_offsets:
            raise ConfigError("need at least one EBR offset (use 0 for none)")
        object.__setattr__(self, "ebr_offsets", tuple(float(o) for o in self.ebr_offsets))


def offset_dirname(offset: float) -> str:
    return f"ebr_{offset:g}"


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_corpus(
    plan: CorpusPlan,
    refs: list[ReferenceScene],
    collections: dict[str, SoundCollection],
    out_dir: str | Path,
    *,
    audio_format: str = "float32",
    sample_rate: int | None = None,
    event_fade: float = DEFAULT_EVENT_FADE,
    texture_overlap: float = DEFAULT_TEXTURE_OVERLAP,
    jobs: int = 1,
) -> dict:
    """Build couples x replications x offsets scenes plus a manifest.

    Every scene derives its seed from (plan seed, couple index, replication
    index, offset index), so the corpus is reproducible and each scene is
    independent of build order.
    """
    out_dir = Path(out_dir)
    if not refs:
        raise ConfigError("no reference scenes to build from")

    # Fail fast on unresolvable classes or backgrounds before any rendering.
    refs = [ensure_reference_ebrs(ref) for ref in refs]
    for ref in refs:
        _background_collection(ref.background_label, collections)
        _check_class_collections({a.label for a in ref.annotations}, collections)
    abstract_params: dict[str, dict[str, ClassParams]] = {}
    if plan.mode == "abstract":
        abstract_params = estimate_class_params(refs)

    tasks = []
    for offset_index, offset in enumerate(plan.ebr_offsets):
        for couple_index, ref in enumerate(refs):
            for replication in range(plan.replications):
                tasks.append((offset_index, offset, couple_index, ref, replication))

    def build_one(task) -> dict:
        offset_index, offset, couple_index, ref, replication = task
        scene_seed = derive_seed(plan.seed, couple_index, replication, offset_index)
        if plan.mode == "instance":
            output = build_instance_scene(
                ref,
                collections,
                ebr_offset=offset,
                seed=scene_seed,
                sample_rate=sample_rate,
                event_fade=event_fade,
                texture_overlap=texture_overlap,
            )
        else:
            output = build_abstract_scene(
                abstract_params[ref.name],
                collections,
                seed=scene_seed,
                duration=ref.duration,
                background_label=ref.background_label,
                ebr_offset=offset,
                sample_rate=sample_rate,
                event_fade=event_fade,
                texture_overlap=texture_overlap,
                reference_name=ref.name,
            )
        rel = Path(offset_dirname(offset)) / ref.name / f"rep{replication:02d}"
        scene_dir = out_dir / rel
        write_scene(output, scene_dir, audio_format)
        return {
            "path": rel.as_posix(),
            "ebr_offset": offset,
            "couple": ref.name,
            "replication": replication,
            "seed": scene_seed,
            "spec_hash": output.metadata["spec_hash"],
            "events": len(output.annotations),
            "sha256": {
                "mix.wav": _file_sha256(scene_dir / "mix.wav"),
                "annotation.txt": _file_sha256(scene_dir / "annotation.txt"),
            },
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(build_one, tasks))
    else:
        entries = [build_one(task) for task in tasks]

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "mode": plan.mode,
        "ebr_offsets": list(plan.ebr_offsets),
        "replications": plan.replications,
        "seed": plan.seed,
        "couples": [ref.name for ref in refs],
        "scene_count": len(entries),
        "scenes": entries,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8"
    )
    return manifest
