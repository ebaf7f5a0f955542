"""Scene rendering from the morphological model.

A scene is a sum of semantic sound tracks. An event track is a sequence of
clips drawn from one collection: onsets follow the recursion
``onset[j] = onset[j-1] + Normal(interval_mean, interval_std)`` starting at
the track start time, and each clip is scaled so its realized EBR against
the scene background equals a fresh ``Normal(ebr_mean, ebr_std)`` draw in
dB. A texture track is a back-to-back equal-power crossfade of clips with a
single gain applied to the whole bed.

All randomness flows from one seed; each track consumes an independently
derived sub-stream so tracks can be rendered in any order (or concurrently)
with identical output.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audio
from .audio import AudioClip
from .collection import CollectionKind, DrawState, SoundCollection, draw_index
from .errors import ConfigError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_SAMPLE_RATE = 44100
DEFAULT_EVENT_FADE = 0.005
DEFAULT_TEXTURE_OVERLAP = 1.0
MIN_INTERVAL = 1e-3
MAX_INTERVAL_REDRAWS = 1000


def derive_seed(*components: int) -> int:
    """Deterministically fold seed components into one 64-bit integer."""
    ss = np.random.SeedSequence([int(c) & 0xFFFFFFFFFFFFFFFF for c in components])
    return int(ss.generate_state(1, np.uint64)[0])


def draw_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    """One Gaussian draw; degenerate std=0 returns the mean exactly."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std == 0:
        return float(mean)
    return float(rng.normal(mean, std))


def draw_interval(
    rng: np.random.Generator,
    mean: float,
    std: float,
    min_interval: float = MIN_INTERVAL,
) -> float:
    """Gaussian inter-onset interval, redrawn while <= `min_interval`."""
    if std == 0:
        if mean <= min_interval:
            raise ConfigError(
                f"degenerate interval parameters (mean={mean}, std=0) can never "
                f"exceed the {min_interval}s floor"
            )
        return float(mean)
    for _ in range(MAX_INTERVAL_REDRAWS):
        value = draw_normal(rng, mean, std)
        if value > min_interval:
            return value
    raise ConfigError(
        f"interval draw from Normal({mean}, {std}) failed to exceed "
        f"{min_interval}s after {MAX_INTERVAL_REDRAWS} attempts"
    )


@dataclass(frozen=True)
class TrackSpec:
    """Control parameters of one semantic sound track.

    EBR statistics are in dB, interval statistics in seconds. For texture
    tracks the EBR std and interval parameters are forced to zero (the bed
    gain is drawn once) and `ebr_mean` acts as an absolute gain in dB on the
    raw material.
    """

    collection: str
    kind: CollectionKind
    start_time: float
    end_time: float
    ebr_mean: float = 0.0
    ebr_std: float = 0.0
    interval_mean: float = 0.0
    interval_std: float = 0.0
    name: str | None = None
    max_event_duration: float | None = None

    def __post_init__(self):
        if self.start_time < 0 or self.end_time <= self.start_time:
            raise ConfigError(
                f"track {self.collection!r}: need 0 <= start < end, got "
                f"[{self.start_time}, {self.end_time}]"
            )
        if self.ebr_std < 0 or self.interval_std < 0:
            raise ConfigError(f"track {self.collection!r}: negative std")
        if self.kind is CollectionKind.TEXTURE and (
            self.ebr_std or self.interval_mean or self.interval_std
        ):
            object.__setattr__(self, "ebr_std", 0.0)
            object.__setattr__(self, "interval_mean", 0.0)
            object.__setattr__(self, "interval_std", 0.0)

    def to_dict(self) -> dict:
        d = {
            "collection": self.collection,
            "kind": self.kind.value,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "ebr_mean": self.ebr_mean,
            "ebr_std": self.ebr_std,
            "interval_mean": self.interval_mean,
            "interval_std": self.interval_std,
        }
        if self.name is not None:
            d["name"] = self.name
        if self.max_event_duration is not None:
            d["max_event_duration"] = self.max_event_duration
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrackSpec":
        return cls(
            collection=d["collection"],
            kind=CollectionKind.parse(d["kind"]),
            start_time=float(d["start_time"]),
            end_time=float(d["end_time"]),
            ebr_mean=float(d.get("ebr_mean", 0.0)),
            ebr_std=float(d.get("ebr_std", 0.0)),
            interval_mean=float(d.get("interval_mean", 0.0)),
            interval_std=float(d.get("interval_std", 0.0)),
            name=d.get("name"),
            max_event_duration=(
                float(d["max_event_duration"]) if "max_event_duration" in d else None
            ),
        )


@dataclass(frozen=True)
class SceneSpec:
    """Scene-level assembly: duration, seed, tracks and render defaults."""

    duration: float
    tracks: tuple[TrackSpec, ...]
    background: str | None = None
    sample_rate: int = DEFAULT_SAMPLE_RATE
    seed: int = 0
    event_fade: float = DEFAULT_EVENT_FADE
    texture_overlap: float = DEFAULT_TEXTURE_OVERLAP
    normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        if self.duration <= 0:
            raise ConfigError(f"scene duration must be positive, got {self.duration}")
        if not self.tracks:
            raise ConfigError("scene needs at least one track")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        names = self.track_names()
        for track in self.tracks:
            if track.end_time > self.duration + 1e-9:
                raise ConfigError(
                    f"track {track.collection!r} ends at {track.end_time}s, beyond "
                    f"the {self.duration}s scene"
                )
        has_events = any(t.kind is CollectionKind.EVENT for t in self.tracks)
        if has_events:
            if self.background is None:
                raise ConfigError("scenes with event tracks need a background texture")
            if self.background not in names:
                raise ConfigError(
                    f"background {self.background!r} does not name any track "
                    f"(tracks: {names})"
                )
            bg = self.tracks[names.index(self.background)]
            if bg.kind is not CollectionKind.TEXTURE:
                raise ConfigError(
                    f"background {self.background!r} must be a texture track"
                )
        elif self.background is not None and self.background not in names:
            raise ConfigError(f"background {self.background!r} does not name any track")

    def track_names(self) -> list[str]:
        """Unique track names: the given name or the collection label, with a
        numeric suffix on collisions (stable in track order)."""
        names: list[str] = []
        for track in self.tracks:
            base = track.name or track.collection
            name = base
            k = 2
            while name in names:
                name = f"{base}-{k}"
                k += 1
            names.append(name)
        return names

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "background": self.background,
            "event_fade": self.event_fade,
            "texture_overlap": self.texture_overlap,
            "normalize": self.normalize,
            "tracks": [t.to_dict() for t in self.tracks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported scene spec schema_version {version}")
        return cls(
            duration=float(d["duration"]),
            tracks=tuple(TrackSpec.from_dict(t) for t in d["tracks"]),
            background=d.get("background"),
            sample_rate=int(d.get("sample_rate", DEFAULT_SAMPLE_RATE)),
            seed=int(d.get("seed", 0)),
            event_fade=float(d.get("event_fade", DEFAULT_EVENT_FADE)),
            texture_overlap=float(d.get("texture_overlap", DEFAULT_TEXTURE_OVERLAP)),
            normalize=bool(d.get("normalize", False)),
        )

    @classmethod
    def from_json_file(cls, path) -> "SceneSpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
            return cls.from_dict(json.loads(text))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load scene spec {path}: {exc}") from exc

    def spec_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(canonical).hexdigest()


@dataclass(frozen=True)
class EventAnnotation:
    """One placed event: onset/offset in seconds, class label, EBR in dB."""

    onset: float
    offset: float
    label: str
    ebr: float | None = None

    def __post_init__(self):
        if self.onset < 0 or self.offset <= self.onset:
            raise ValueError(
                f"need 0 <= onset < offset, got [{self.onset}, {self.offset}]"
            )


@dataclass
class SceneOutput:
    """Rendered scene: the mix, per-track stems, ground truth and provenance."""

    mix: AudioClip
    stems: dict[str, AudioClip]
    annotations: list[EventAnnotation]
    metadata: dict


def _fitted_fades(duration: float, fade: float) -> float:
    # Shrink symmetric fades so they always fit very short clips.
    return min(fade, duration / 2.0)


def render_event_samples(
    clip: AudioClip,
    fade: float,
    background_rms: float,
    target_ebr_db: float,
    max_duration: float | None = None,
) -> np.ndarray:
    """Fade, optionally truncate and scale one event clip to a target EBR.

    The gain is computed from the post-fade RMS so the realized EBR measured
    over the placed samples equals the target.
    """
    samples = clip.samples
    sr = clip.sample_rate
    if max_duration is not None:
        cap = int(round(max_duration * sr))
        if len(samples) > cap:
            samples = samples[:cap]
    trimmed = AudioClip(samples, sr)
    fade = _fitted_fades(trimmed.duration, fade)
    faded = audio.apply_fade(trimmed, fade, fade)
    level = audio.rms(faded)
    gain = audio.gain_for_target_ebr(level, background_rms, target_ebr_db)
    return faded.samples * gain


def generate_event_track(
    track: TrackSpec,
    collection: SoundCollection,
    background_rms: float,
    rng: np.random.Generator,
    *,
    sample_rate: int,
    scene_duration: float,
    fade: float = DEFAULT_EVENT_FADE,
) -> tuple[AudioClip, list[EventAnnotation]]:
    """Render one event track into a scene-length stem with its annotations.

    The first onset sits at the track start time; the sequence stops before
    an onset would reach the track end time. Events running past the scene
    end are truncated with the annotation offset clamped.
    """
    if collection.kind is not CollectionKind.EVENT:
        raise ConfigError(f"collection {collection.label!r} is not an event collection")
    if background_rms <= 0:
        raise ValueError(f"background RMS must be positive, got {background_rms}")
    if collection.sample_rate != sample_rate:
        raise ConfigError(
            f"collection {collection.label!r} is at {collection.sample_rate} Hz, "
            f"scene wants {sample_rate} Hz (resampling is unsupported)"
        )
    scene_len = int(round(scene_duration * sample_rate))
    buf = np.zeros(scene_len)
    state = DrawState()
    annotations: list[EventAnnotation] = []

    t = track.start_time
    while t < track.end_time:
        index = draw_index(collection, state, rng)
        clip = collection.clip(index)
        target_ebr = draw_normal(rng, track.ebr_mean, track.ebr_std)
        event = render_event_samples(
            clip, fade, background_rms, target_ebr, track.max_event_duration
        )
        start_n = int(round(t * sample_rate))
        if start_n < scene_len:
            end_n = min(start_n + len(event), scene_len)
            buf[start_n:end_n] += event[: end_n - start_n]
            annotations.append(
                EventAnnotation(
                    onset=start_n / sample_rate,
                    offset=end_n / sample_rate,
                    label=collection.label,
                    ebr=target_ebr,
                )
            )
        t += draw_interval(rng, track.interval_mean, track.interval_std)
    return AudioClip(buf, sample_rate), annotations


def generate_texture_track(
    track: TrackSpec,
    collection: SoundCollection,
    rng: np.random.Generator,
    *,
    sample_rate: int,
    scene_duration: float,
    overlap: float = DEFAULT_TEXTURE_OVERLAP,
    fade: float = DEFAULT_EVENT_FADE,
) -> tuple[AudioClip, list[int]]:
    """Render one texture bed into a scene-length stem.

    Clips are drawn without immediate repeats (preferring runs from the same
    recording session) and crossfade-concatenated until the track span is
    covered; the tail is trimmed, a single gain is applied to the whole bed
    and the track edges are faded. Returns the stem and the drawn item plan.
    """
    if collection.kind is not CollectionKind.TEXTURE:
        raise ConfigError(f"collection {collection.label!r} is not a texture collection")
    if collection.sample_rate != sample_rate:
        raise ConfigError(
            f"collection {collection.label!r} is at {collection.sample_rate} Hz, "
            f"scene wants {sample_rate} Hz (resampling is unsupported)"
        )
    scene_len = int(round(scene_duration * sample_rate))
    span = track.end_time - track.start_time
    span_n = min(int(round(span * sample_rate)), scene_len)
    overlap_n = int(round(overlap * sample_rate))

    state = DrawState()
    plan: list[int] = []
    clips: list[AudioClip] = []
    covered = 0
    session = None
    while covered < span_n:
        index = draw_index(collection, state, rng, prefer_session=session)
        plan.append(index)
        clip = collection.clip(index)
        clips.append(clip)
        session = collection.entries[index].session_id
        covered += len(clip) if len(clips) == 1 else len(clip) - overlap_n

    bed = audio.crossfade_concat(clips, overlap)
    samples = bed.samples[:span_n] * 10.0 ** (track.ebr_mean / 20.0)

    edge_fade = _fitted_fades(span_n / sample_rate, fade)
    stem_span = audio.apply_fade(AudioClip(samples, sample_rate), edge_fade, edge_fade)

    buf = np.zeros(scene_len)
    start_n = int(round(track.start_time * sample_rate))
    end_n = min(start_n + span_n, scene_len)
    buf[start_n:end_n] = stem_span.samples[: end_n - start_n]
    return AudioClip(buf, sample_rate), plan


def render_scene(
    spec: SceneSpec,
    collections: dict[str, SoundCollection],
    seed: int | None = None,
) -> SceneOutput:
    """Render a full scene: background first (its RMS is the EBR reference),
    then every other track; the mix is the sample-wise sum of all stems.

    The output is a pure function of (spec, collection contents, seed).
    """
    seed = spec.seed if seed is None else seed
    names = spec.track_names()
    resolved: list[SoundCollection] = []
    for track in spec.tracks:
        if track.collection not in collections:
            raise ConfigError(f"unknown collection label {track.collection!r}")
        collection = collections[track.collection]
        if collection.kind is not track.kind:
            raise ConfigError(
                f"track kind {track.kind.value!r} does not match collection "
                f"{track.collection!r} ({collection.kind.value})"
            )
        resolved.append(collection)

    streams = np.random.SeedSequence(seed).spawn(len(spec.tracks))
    stems: dict[str, AudioClip] = {}
    texture_plans: dict[str, list[int]] = {}
    events_meta: list[dict] = []

    background_rms = None
    bg_index = names.index(spec.background) if spec.background is not None else None
    if bg_index is not None:
        bg_stem, bg_plan = generate_texture_track(
            spec.tracks[bg_index],
            resolved[bg_index],
            np.random.default_rng(streams[bg_index]),
            sample_rate=spec.sample_rate,
            scene_duration=spec.duration,
            overlap=spec.texture_overlap,
            fade=spec.event_fade,
        )
        stems[names[bg_index]] = bg_stem
        texture_plans[names[bg_index]] = bg_plan
        background_rms = audio.rms(bg_stem)
        if background_rms <= 0 and any(
            t.kind is CollectionKind.EVENT for t in spec.tracks
        ):
            raise ConfigError(
                f"background {spec.background!r} rendered silent; cannot realize EBRs"
            )

    annotations: list[EventAnnotation] = []
    for i, track in enumerate(spec.tracks):
        if i == bg_index:
            continue
        rng = np.random.default_rng(streams[i])
        if track.kind is CollectionKind.EVENT:
            stem, track_annotations = generate_event_track(
                track,
                resolved[i],
                background_rms,
                rng,
                sample_rate=spec.sample_rate,
                scene_duration=spec.duration,
                fade=spec.event_fade,
            )
            annotations.extend(track_annotations)
            events_meta.extend(
                {
                    "onset": a.onset,
                    "offset": a.offset,
                    "label": a.label,
                    "ebr": a.ebr,
                    "track": names[i],
                }
                for a in track_annotations
            )
        else:
            stem, plan = generate_texture_track(
                track,
                resolved[i],
                rng,
                sample_rate=spec.sample_rate,
                scene_duration=spec.duration,
                overlap=spec.texture_overlap,
                fade=spec.event_fade,
            )
            texture_plans[names[i]] = plan
        stems[names[i]] = stem

    ordered_stems = {name: stems[name] for name in names}
    scene_len = int(round(spec.duration * spec.sample_rate))
    mixed = audio.mix(list(ordered_stems.values()), scene_len)

    global_scale = 1.0
    peak = float(np.max(np.abs(mixed.samples))) if len(mixed) else 0.0
    if peak > 1.0:
        if spec.normalize:
            global_scale = 1.0 / peak
            mixed = AudioClip(mixed.samples * global_scale, spec.sample_rate)
            ordered_stems = {
                name: AudioClip(stem.samples * global_scale, spec.sample_rate)
                for name, stem in ordered_stems.items()
            }
        else:
            log.warning(
                "mix peaks at %.3f (>1); written float output is untouched but "
                "PCM16 output would clip",
                peak,
            )

    order = sorted(range(len(annotations)), key=lambda k: (annotations[k].onset, annotations[k].label))
    annotations = [annotations[k] for k in order]
    events_meta = [events_meta[k] for k in order]

    metadata = {
        "schema_version": SCHEMA_VERSION,
        "generator": "scenesim",
        "seed": seed,
        "spec_hash": spec.spec_hash(),
        "sample_rate": spec.sample_rate,
        "duration": spec.duration,
        "background": spec.background,
        "global_scale": global_scale,
        "tracks": [
            dict(t.to_dict(), name=names[i]) for i, t in enumerate(spec.tracks)
        ],
        "texture_plans": texture_plans,
        "events": events_meta,
    }
    return SceneOutput(
        mix=mixed, stems=ordered_stems, annotations=annotations, metadata=metadata
    )
