"""scenesim: simulate annotated acoustic scenes and score event detectors.

Scenes are sums of semantic sound tracks (event sequences and texture beds)
rendered from labeled sample collections; corpora can clone or abstract a
reference corpus; detector output is scored with the class-wise
event-onset F-measure.
"""
from ._version import __version__
from .audio import (
    AudioClip,
    apply_fade,
    crossfade_concat,
    ebr_db,
    gain_for_target_ebr,
    mix,
    read_audio,
    rms,
    write_audio,
)
from .collection import (
    CollectionKind,
    DrawState,
    SampleEntry,
    SoundCollection,
    draw_index,
    load_collection,
    load_collections,
    manifest_from_dir,
    save_manifest,
    validate_texture_sequencing,
)
from .corpus import (
    ClassParams,
    CorpusPlan,
    ReferenceScene,
    build_abstract_scene,
    build_corpus,
    build_instance_scene,
    estimate_class_params,
    estimate_event_ebr,
    load_reference_corpus,
    parse_annotations,
    write_annotations,
    write_scene,
)
from .errors import (
    AudioFormatError,
    CollectionError,
    ConfigError,
    DataError,
    SceneSimError,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    aggregate_reports,
    cwebf,
    evaluate,
    evaluate_many,
    false_positive_profile,
    match_events,
)
from .sequencer import (
    EventAnnotation,
    SceneOutput,
    SceneSpec,
    TrackSpec,
    derive_seed,
    draw_interval,
    draw_normal,
    generate_event_track,
    generate_texture_track,
    render_scene,
)

__all__ = [name for name in dir() if not name.startswith("_")]
