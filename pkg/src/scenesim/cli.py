"""Command-line interface.

Subcommands: generate (render one scene from a spec), corpus (build an
instance or abstract corpus from references), stats (estimate per-class
parameters), eval (score detector output), audit (re-verify rendered
scenes). All randomness flows from --seed; every run writes a meta.json
with the resolved configuration and tool version.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 audit failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from ._version import __version__
from .audit import audit_corpus
from .collection import load_collections
from .corpus import (
    CorpusPlan,
    build_corpus,
    estimate_class_params,
    load_reference_corpus,
    parse_annotations,
    write_scene,
)
from .errors import ConfigError, DataError
from .evaluation import (
    EvalConfig,
    EvalReport,
    aggregate_reports,
    evaluate,
    false_positive_profile,
    match_events,
)
from .sequencer import SceneSpec, render_scene

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_AUDIT = 4


def _write_run_meta(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "tool": "scenesim",
        "tool_version": __version__,
        "command": command,
        "config": config,
    }
    (out_dir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8"
    )


def cmd_generate(args) -> int:
    spec = SceneSpec.from_json_file(args.spec)
    collections = load_collections(args.collections)
    seed = args.seed if args.seed is not None else spec.seed
    output = render_scene(spec, collections, seed=seed)
    config = {
        "spec": str(args.spec),
        "collections": str(args.collections),
        "out": str(args.out),
        "seed": seed,
        "format": args.format,
    }
    write_scene(output, args.out, args.format, extra_meta={"cli": config})
    print(f"wrote scene to {args.out} ({len(output.annotations)} events)")
    return EXIT_OK


def cmd_corpus(args) -> int:
    refs = load_reference_corpus(args.refs)
    collections = load_collections(args.collections)
    offsets = tuple(float(x) for x in args.offsets.split(","))
    plan = CorpusPlan(
        mode=args.mode,
        ebr_offsets=offsets,
        replications=args.replications,
        seed=args.seed,
    )
    manifest = build_corpus(
        plan,
        refs,
        collections,
        args.out,
        audio_format=args.format,
        jobs=args.jobs,
    )
    config = {
        "mode": args.mode,
        "refs": str(args.refs),
        "collections": str(args.collections),
        "out": str(args.out),
        "offsets": list(offsets),
        "replications": args.replications,
        "seed": args.seed,
        "format": args.format,
        "jobs": args.jobs,
    }
    _write_run_meta(Path(args.out), "corpus", config)
    print(
        f"built {manifest['scene_count']} scenes "
        f"({len(manifest['couples'])} couples x {args.replications} replications "
        f"x {len(offsets)} offsets) under {args.out}"
    )
    return EXIT_OK


def _params_table(params_by_couple: dict) -> str:
    header = (
        f"{'couple':<18}{'class':<18}{'n':>4}{'ebr_mu':>9}{'ebr_sd':>9}"
        f"{'int_mu':>9}{'int_sd':>9}{'dur_mu':>9}{'dur_sd':>9}{'start':>9}{'end':>9}"
    )
    lines = [header, "-" * len(header)]
    for couple, params in sorted(params_by_couple.items()):
        for label, p in sorted(params.items()):
            lines.append(
                f"{couple:<18}{label:<18}{p.event_count:>4}"
                f"{p.ebr_mean:>9.2f}{p.ebr_std:>9.2f}"
                f"{p.interval_mean:>9.2f}{p.interval_std:>9.2f}"
                f"{p.duration_mean:>9.2f}{p.duration_std:>9.2f}"
                f"{p.start_time:>9.2f}{p.end_time:>9.2f}"
            )
    return "\n".join(lines)


def cmd_stats(args) -> int:
    refs = load_reference_corpus(args.refs)
    params_by_couple = estimate_class_params(refs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "tool_version": __version__,
        "couples": {
            couple: {label: p.to_dict() for label, p in params.items()}
            for couple, params in params_by_couple.items()
        },
    }
    (out_dir / "params.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8"
    )
    table = _params_table(params_by_couple)
    (out_dir / "params.txt").write_text(table + "\n", encoding="utf-8")
    _write_run_meta(out_dir, "stats", {"refs": str(args.refs), "out": str(args.out)})
    print(table)
    return EXIT_OK


def _annotation_map(root: Path) -> dict[str, Path]:
    """Discover annotation files: scene trees (**/annotation.txt keyed by
    relative directory) or flat *.txt files keyed by stem."""
    if root.is_file():
        return {root.stem: root}
    if not root.is_dir():
        raise DataError(f"no such annotation path: {root}")
    scenes = sorted(root.rglob("annotation.txt"))
    if scenes:
        return {p.parent.relative_to(root).as_posix(): p for p in scenes}
    return {p.stem: p for p in sorted(root.glob("*.txt"))}


def _report_table(report: EvalReport) -> str:
    header = f"{'class':<22}{'tp':>6}{'fp':>6}{'fn':>6}{'prec':>8}{'rec':>8}{'f':>8}"
    lines = [header, "-" * len(header)]
    for label, s in sorted(report.classes.items()):
        lines.append(
            f"{label:<22}{s.tp:>6}{s.fp:>6}{s.fn:>6}"
            f"{s.precision:>8.3f}{s.recall:>8.3f}{s.f:>8.3f}"
        )
    for label, count in sorted(report.extra_detections.items()):
        lines.append(f"{label:<22}{'-':>6}{count:>6}{'-':>6} (label outside class list)")
    lines.append("-" * len(header))
    lines.append(f"CWEBF = {report.cwebf:.4f} over {len(report.classes)} classes")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    ref_root = Path(args.ref)
    det_root = Path(args.det)
    ref_map = _annotation_map(ref_root)
    if not ref_map:
        raise DataError(f"no reference annotations found under {ref_root}")
    det_map = _annotation_map(det_root)
    class_list = tuple(args.classes.split(",")) if args.classes else None
    cfg = EvalConfig(onset_tolerance=args.tolerance, class_list=class_list)

    per_scene: dict[str, EvalReport] = {}
    pair_dump: list[dict] = []
    for key in sorted(ref_map):
        refs = parse_annotations(ref_map[key])
        det_path = det_map.get(key)
        dets = parse_annotations(det_path) if det_path else []
        if det_path is None:
            log.warning("no detections for scene %r; scoring as all misses", key)
        per_scene[key] = evaluate(refs, dets, cfg)
        if args.dump_pairs:
            for label, pairs in sorted(match_events(refs, dets, cfg).items()):
                pair_dump.extend(
                    {
                        "scene": key,
                        "label": label,
                        "ref_onset": refs[i].onset,
                        "det_onset": dets[j].onset,
                    }
                    for i, j in pairs
                )
    unmatched = sorted(set(det_map) - set(ref_map))
    if unmatched:
        log.warning("detection files without references ignored: %s", ", ".join(unmatched))

    aggregate = aggregate_reports(list(per_scene.values()))
    profile, worst = false_positive_profile(list(per_scene.values()))

    # Per-offset sweep when the reference tree is an EBR-offset corpus.
    offsets: dict[float, list[str]] = {}
    for key in per_scene:
        head = key.split("/", 1)[0]
        if head.startswith("ebr_"):
            try:
                offsets.setdefault(float(head[4:]), []).append(key)
            except ValueError:
                pass
    curve = []
    if len(offsets) > 1:
        for offset in sorted(offsets):
            sub = aggregate_reports([per_scene[k] for k in offsets[offset]])
            curve.append(
                {"ebr_offset": offset, "cwebf": sub.cwebf, "scenes": len(offsets[offset])}
            )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "tool_version": __version__,
        "config": {"tolerance": args.tolerance, "class_list": class_list},
        "report": aggregate.to_dict(),
        "fp_profile": profile,
        "fp_argmax": list(worst) if worst else None,
        "per_offset": curve,
    }
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8"
    )
    table = _report_table(aggregate)
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    if curve:
        with open(out_dir / "curve.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["ebr_offset", "cwebf", "scenes"])
            writer.writeheader()
            writer.writerows(curve)
    if args.dump_pairs:
        (out_dir / "pairs.json").write_text(
            json.dumps(pair_dump, sort_keys=True, indent=2), encoding="utf-8"
        )
    if args.plot and curve:
        _plot_curve(curve, out_dir / "curve.png")
    _write_run_meta(
        out_dir,
        "eval",
        {
            "ref": str(args.ref),
            "det": str(args.det),
            "out": str(args.out),
            "tolerance": args.tolerance,
            "classes": class_list,
        },
    )
    print(table)
    return EXIT_OK


def _plot_curve(curve: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    offsets = [row["ebr_offset"] for row in curve]
    values = [row["cwebf"] for row in curve]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(offsets, values, marker="o")
    ax.set_xlabel("EBR offset (dB)")
    ax.set_ylabel("CWEBF")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cmd_audit(args) -> int:
    report = audit_corpus(args.corpus)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "audit.json").write_text(
        json.dumps(report, sort_keys=True, indent=2), encoding="utf-8"
    )
    _write_run_meta(out_dir, "audit", {"corpus": str(args.corpus), "out": str(args.out)})
    if report["failures"]:
        for failure in report["failures"]:
            print(
                f"FAIL {failure['check']} in {failure['scene']}: {failure['detail']}",
                file=sys.stderr,
            )
        print(
            f"audit: {len(report['failures'])} failure(s) across "
            f"{report['scenes_checked']} scenes",
            file=sys.stderr,
        )
        return EXIT_AUDIT
    print(f"audit: all checks passed across {report['scenes_checked']} scenes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenesim",
        description="Simulate annotated acoustic scenes and score event detectors.",
    )
    parser.add_argument("--version", action="version", version=f"scenesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render one scene from a JSON spec")
    p.add_argument("--spec", required=True, help="scene spec JSON file")
    p.add_argument("--collections", required=True, help="directory of collection manifests")
    p.add_argument("--out", required=True, help="output scene directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("corpus", help="build a simulated corpus from references")
    p.add_argument("--mode", choices=("instance", "abstract"), required=True)
    p.add_argument("--refs", required=True, help="reference corpus directory")
    p.add_argument("--collections", required=True, help="directory of collection manifests")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument(
        "--offsets",
        default="0",
        help="comma-separated EBR offsets in dB (e.g. 6,0,-6,-12)",
    )
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="parallel scene builds")
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("stats", help="estimate per-class parameters from references")
    p.add_argument("--refs", required=True, help="reference corpus directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", help="score detector output against ground truth")
    p.add_argument("--ref", required=True, help="reference annotations (file or tree)")
    p.add_argument("--det", required=True, help="detector annotations (file or tree)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tolerance", type=float, default=0.1, help="onset tolerance in s")
    p.add_argument("--classes", default=None, help="comma-separated explicit class list")
    p.add_argument("--plot", action="store_true", help="also render curve.png")
    p.add_argument(
        "--dump-pairs", action="store_true", help="write matched ref/det onset pairs"
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="re-verify invariants of rendered scenes")
    p.add_argument("--corpus", required=True, help="corpus or scene directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(
            logging, os.environ.get("SCENESIM_LOG", "warning").upper(), logging.WARNING
        ),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
