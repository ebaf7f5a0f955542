"""Detector scoring: class-wise, onset-based event matching.

Matching is one-to-one within an onset tolerance, computed per class. The
headline number is the class-wise event-onset F-measure: the unweighted mean
over classes of the per-class F-measures, so frequent classes do not
dominate. Offsets are ignored throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .sequencer import EventAnnotation

log = logging.getLogger(__name__)

DEFAULT_ONSET_TOLERANCE = 0.1


@dataclass(frozen=True)
class EvalConfig:
    """Scoring knobs: the onset tolerance and an optional fixed class set."""

    onset_tolerance: float = DEFAULT_ONSET_TOLERANCE
    class_list: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.onset_tolerance <= 0:
            raise ValueError(f"onset tolerance must be > 0, got {self.onset_tolerance}")
        if self.class_list is not None:
            object.__setattr__(self, "class_list", tuple(self.class_list))


@dataclass
class ClassScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f: float


@dataclass
class EvalReport:
    """Per-class counts and PRF plus the class-wise mean F (CWEBF)."""

    classes: dict[str, ClassScore]
    cwebf: float
    extra_detections: dict[str, int] = field(default_factory=dict)
    n_scenes: int = 1

    def to_dict(self) -> dict:
        return {
            "cwebf": self.cwebf,
            "n_scenes": self.n_scenes,
            "classes": {
                label: {
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f": s.f,
                }
                for label, s in sorted(self.classes.items())
            },
            "extra_detections": dict(sorted(self.extra_detections.items())),
        }


def match_events(
    refs: list[EventAnnotation],
    dets: list[EventAnnotation],
    cfg: EvalConfig = EvalConfig(),
) -> dict[str, list[tuple[int, int]]]:
    """Maximum one-to-one matching of detections to references per class.

    A pair is feasible when labels agree and onsets differ by at most the
    tolerance. Both sides are walked in onset order and each detection takes
    the earliest feasible unmatched reference; tests check this equals
    exhaustive maximum matching.
    """
    tol = cfg.onset_tolerance
    ref_by_class: dict[str, list[int]] = {}
    for i, ann in enumerate(refs):
        ref_by_class.setdefault(ann.label, []).append(i)
    det_by_class: dict[str, list[int]] = {}
    for j, ann in enumerate(dets):
        det_by_class.setdefault(ann.label, []).append(j)

    matching: dict[str, list[tuple[int, int]]] = {}
    for label in sorted(set(ref_by_class) & set(det_by_class)):
        r_indices = sorted(ref_by_class[label], key=lambda i: refs[i].onset)
        d_indices = sorted(det_by_class[label], key=lambda j: dets[j].onset)
        pairs: list[tuple[int, int]] = []
        i = 0
        for j in d_indices:
            det_onset = dets[j].onset
            while i < len(r_indices) and refs[r_indices[i]].onset < det_onset - tol:
                i += 1
            if i < len(r_indices) and abs(refs[r_indices[i]].onset - det_onset) <= tol:
                pairs.append((r_indices[i], j))
                i += 1
        if pairs:
            matching[label] = pairs
    return matching


def class_prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F-measure from match counts (0 on empty sides)."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f


def cwebf(report: EvalReport) -> float:
    """Unweighted mean of the per-class F-measures over evaluated classes."""
    if not report.classes:
        return 0.0
    return sum(score.f for score in report.classes.values()) / len(report.classes)


def evaluate(
    refs: list[EventAnnotation],
    dets: list[EventAnnotation],
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Score one scene's detections against its ground truth.

    Classes absent from both sides are not evaluated; with an explicit class
    list, detections of labels outside it are reported separately and do not
    enter the class-wise mean.
    """
    ref_labels = {a.label for a in refs}
    det_labels = {a.label for a in dets}
    extra: dict[str, int] = {}
    if cfg.class_list is not None:
        known = set(cfg.class_list)
        for label in sorted(det_labels - known):
            extra[label] = sum(1 for a in dets if a.label == label)
        ignored_refs = ref_labels - known
        if ignored_refs:
            log.warning(
                "reference labels outside the class list ignored: %s",
                ", ".join(sorted(ignored_refs)),
            )
        labels = [l for l in cfg.class_list if l in ref_labels or l in det_labels]
        refs = [a for a in refs if a.label in known]
        dets = [a for a in dets if a.label in known]
    else:
        labels = sorted(ref_labels | det_labels)

    matching = match_events(refs, dets, cfg)
    classes: dict[str, ClassScore] = {}
    for label in labels:
        tp = len(matching.get(label, []))
        n_ref = sum(1 for a in refs if a.label == label)
        n_det = sum(1 for a in dets if a.label == label)
        fp = n_det - tp
        fn = n_ref - tp
        precision, recall, f = class_prf(tp, fp, fn)
        classes[label] = ClassScore(tp, fp, fn, precision, recall, f)

    report = EvalReport(classes=classes, cwebf=0.0, extra_detections=extra)
    report.cwebf = cwebf(report)
    return report


def aggregate_reports(reports: list[EvalReport]) -> EvalReport:
    """Pool per-class counts across scenes, then recompute PRF and CWEBF."""
    totals: dict[str, list[int]] = {}
    extra: dict[str, int] = {}
    for report in reports:
        for label, score in report.classes.items():
            t = totals.setdefault(label, [0, 0, 0])
            t[0] += score.tp
            t[1] += score.fp
            t[2] += score.fn
        for label, count in report.extra_detections.items():
            extra[label] = extra.get(label, 0) + count
    classes = {}
    for label, (tp, fp, fn) in sorted(totals.items()):
        precision, recall, f = class_prf(tp, fp, fn)
        classes[label] = ClassScore(tp, fp, fn, precision, recall, f)
    aggregate = EvalReport(
        classes=classes,
        cwebf=0.0,
        extra_detections=extra,
        n_scenes=sum(r.n_scenes for r in reports),
    )
    aggregate.cwebf = cwebf(aggregate)
    return aggregate


def evaluate_many(
    pairs: list[tuple[list[EventAnnotation], list[EventAnnotation]]],
    cfg: EvalConfig = EvalConfig(),
) -> tuple[EvalReport, list[EvalReport]]:
    """Score many (reference, detection) scenes; returns (pooled, per-scene)."""
    per_scene = [evaluate(refs, dets, cfg) for refs, dets in pairs]
    return aggregate_reports(per_scene), per_scene


def false_positive_profile(
    reports: list[EvalReport],
) -> tuple[dict[str, float], tuple[str, float] | None]:
    """Mean false-positive count per scene for each class, plus the argmax.

    Detections outside the class list count toward their own label.
    """
    if not reports:
        raise ValueError("need at least one scene report")
    totals: dict[str, int] = {}
    for report in reports:
        for label, score in report.classes.items():
            totals[label] = totals.get(label, 0) + score.fp
        for label, count in report.extra_detections.items():
            totals[label] = totals.get(label, 0) + count
    n = len(reports)
    profile = {label: count / n for label, count in sorted(totals.items())}
    if not profile:
        return {}, None
    worst = max(profile.items(), key=lambda kv: (kv[1], kv[0]))
    return profile, worst
