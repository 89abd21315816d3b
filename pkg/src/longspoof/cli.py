"""Command-line front door: one subcommand per pipeline stage.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O failure,
4 data error (malformed files, label/trial mismatches, DSP degeneracies).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from longspoof import __version__
from longspoof.audio_io import AudioIoError, IoFailure
from longspoof.compose import InsufficientSources, PlanTargets, RenderError
from longspoof.config import ConfigError, GenerationConfig, apply_overrides, config_hash
from longspoof.dataset import filter_partition, generate_dataset, resegment_dataset
from longspoof.metrics import (
    AP_TAUS,
    AR_CAPS,
    RESOLUTION_S,
    ConfigHashMismatch,
    OneClassOnly,
    evaluate_detection,
    evaluate_localization,
)
from longspoof.noise import EmptyCategory, SilentNoise
from longspoof.protocol import (
    DuplicateId,
    ParseError,
    read_annotations,
    read_manifest,
    resolve_path,
    rng_stream,
    write_manifest,
    write_noise_pool_manifest,
    Manifest,
    make_metadata,
)
from longspoof.scoring import (
    DuplicateTrial,
    MissingTrial,
    UnknownTrial,
    oracle_scorer,
    read_scores,
    write_scores,
)
from longspoof.standardize import NoActivity
from longspoof.synth import SynthConfig, make_synthetic_source

DATA_ROOT_ENV = "LONGSPOOF_DATA_ROOT"

USAGE_ERRORS = (ConfigError,)
IO_ERRORS = (IoFailure,)
DATA_ERRORS = (
    ParseError,
    DuplicateId,
    DuplicateTrial,
    MissingTrial,
    UnknownTrial,
    ConfigHashMismatch,
    OneClassOnly,
    NoActivity,
    EmptyCategory,
    SilentNoise,
    InsufficientSources,
    RenderError,
    AudioIoError,
)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_counts(raw: str, flag: str) -> PlanTargets:
    try:
        bona, spoof = (int(p) for p in raw.split(","))
    except ValueError:
        raise ConfigError(f"{flag} expects 'BONAFIDE,SPOOFED', got {raw!r}") from None
    if bona < 0 or spoof < 0:
        raise ConfigError(f"{flag} counts must be nonnegative")
    return PlanTargets(bona, spoof)


def _data_root(args) -> str | None:
    if getattr(args, "data_root", None):
        return args.data_root
    return os.environ.get(DATA_ROOT_ENV)


def cmd_make_synthetic_source(args) -> int:
    cfg = SynthConfig(
        speakers=args.speakers,
        dur_min_s=args.dur_min,
        dur_max_s=args.dur_max,
        active_min_s=args.active_min,
        active_max_s=args.active_max,
        noise_per_category=args.noise_per_category,
    )
    counts = {}
    for part in ("train", "dev", "eval"):
        raw = getattr(args, part)
        if raw is not None:
            t = _parse_counts(raw, f"--{part}")
            counts[part] = (t.bonafide, t.spoofed)
    if not counts:
        raise ConfigError("give at least one of --train/--dev/--eval")
    _log(f"synthesizing source corpus (seed={args.seed}) under {args.out}")
    rng = rng_stream(args.seed, "synth")
    entries, noise_entries, meta = make_synthetic_source(args.out, counts, cfg, rng, args.seed)
    manifest = Manifest(
        entries, make_metadata("source", args.seed, meta["synth_config_hash"])
    )
    src_path = os.path.join(args.out, "source_manifest.jsonl")
    noise_path = os.path.join(args.out, "noise_manifest.jsonl")
    write_manifest(manifest, src_path)
    write_noise_pool_manifest(noise_entries, noise_path)
    print(src_path)
    print(noise_path)
    return 0


def cmd_generate(args) -> int:
    config = GenerationConfig()
    config.mode = args.mode
    config.noise.snr_min_db = args.snr_min
    config.noise.snr_max_db = args.snr_max
    if args.noise == "off":
        config.noise.weight_none = 1.0
        config.noise.weight_babble = 0.0
        config.noise.weight_music = 0.0
        config.noise.weight_noise = 0.0
    apply_overrides(config, args.set or [])
    config.validate()
    noise_manifest = None
    if args.noise == "on":
        if args.noise_manifest is None:
            raise ConfigError("--noise on needs --noise-manifest (or pass --noise off)")
        noise_manifest = args.noise_manifest
    counts: dict[str, PlanTargets] = {}
    for part in ("train", "dev", "eval"):
        raw = getattr(args, f"counts_{part}")
        if raw is not None:
            counts[part] = _parse_counts(raw, f"--counts-{part}")
    if not counts:
        raise ConfigError("give at least one of --counts-train/--counts-dev/--counts-eval")
    resolved = {
        "seed": args.seed,
        "config": dataclasses.asdict(config),
        "config_hash": config_hash(config),
        "counts": {k: [v.bonafide, v.spoofed] for k, v in counts.items()},
        "jobs": args.jobs,
    }
    _log(f"generate: {json.dumps(resolved, sort_keys=True)}")
    manifest_path, annotations_path = generate_dataset(
        args.manifest,
        args.out,
        config,
        counts,
        seed=args.seed,
        noise_manifest_path=noise_manifest,
        data_root=_data_root(args),
        jobs=args.jobs,
    )
    print(manifest_path)
    print(annotations_path)
    return 0


def cmd_resegment(args) -> int:
    _log(f"resegment: n_seconds={args.n_seconds} manifest={args.long_manifest}")
    path = resegment_dataset(
        args.long_manifest,
        args.out,
        args.n_seconds,
        annotations_path=args.annotations,
        data_root=_data_root(args),
        write_audio=args.write_audio,
        jobs=args.jobs,
    )
    print(path)
    return 0


def cmd_score_oracle(args) -> int:
    manifest = filter_partition(read_manifest(args.manifest), args.partition)
    if not manifest.entries:
        raise ConfigError(f"no trials in partition {args.partition!r}")
    scores = oracle_scorer(manifest, args.sigma, rng_stream(args.seed, "scoring"))
    write_scores(scores, args.out)
    _log(f"wrote {len(scores)} oracle scores (sigma={args.sigma}) to {args.out}")
    print(args.out)
    return 0


def _detection_text(report) -> str:
    lines = [
        "detection",
        f"  eer        {report.eer:8.4f} %   (threshold {report.eer_threshold:.6g})",
        f"  hter       {report.hter:8.4f} %   (operating threshold {report.operating_threshold:.6g})",
        f"  trials     {report.n_bonafide} bonafide / {report.n_spoofed} spoofed",
    ]
    return "\n".join(lines)


def _ap_ar_text(ap_ar) -> str:
    ap_row = "  " + "  ".join(f"AP@{tau:g} {ap_ar.ap[tau]:7.2f}" for tau in AP_TAUS)
    ar_row = "  " + "  ".join(f"AR@{cap} {ap_ar.ar[cap]:7.2f}" for cap in AR_CAPS)
    head = (
        f"localization (chunks of {ap_ar.resolution_s:g} s, "
        f"binarize at {ap_ar.binarize_threshold:.6g})"
    )
    return "\n".join([head, ap_row, ar_row])


def _load_eval_inputs(args):
    eval_manifest = filter_partition(read_manifest(args.eval_manifest), args.eval_partition)
    dev_manifest = filter_partition(read_manifest(args.dev_manifest), args.dev_partition)
    return (
        read_scores(args.eval_scores),
        eval_manifest,
        read_scores(args.dev_scores),
        dev_manifest,
    )


def _write_report(args, payload: dict) -> None:
    out = args.out_json or f"{args.eval_scores}.report.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"report written to {out}")


def cmd_eval_detect(args) -> int:
    ev_scores, ev_manifest, dv_scores, dv_manifest = _load_eval_inputs(args)
    report = evaluate_detection(ev_scores, ev_manifest, dv_scores, dv_manifest)
    print(_detection_text(report))
    _write_report(args, {"detection": report.to_dict()})
    return 0


def cmd_eval_localize(args) -> int:
    ev_scores, ev_manifest, dv_scores, dv_manifest = _load_eval_inputs(args)
    annotations = None
    if args.ap_ar:
        ann_path = args.annotations
        if ann_path is None:
            rel = ev_manifest.metadata.get("annotations")
            if rel is None:
                raise ConfigError("--ap-ar needs --annotations (manifest lacks a path)")
            ann_path = resolve_path(os.path.dirname(os.path.abspath(args.eval_manifest)), rel)
        _, annotations = read_annotations(ann_path)
    report, ap_ar = evaluate_localization(
        ev_scores,
        ev_manifest,
        dv_scores,
        dv_manifest,
        annotations=annotations,
        with_ap_ar=args.ap_ar,
        resolution_s=args.resolution,
        binarize_threshold=args.binarize_threshold,
    )
    print(_detection_text(report))
    payload = {"detection": report.to_dict()}
    if ap_ar is not None:
        print(_ap_ar_text(ap_ar))
        payload["localization"] = ap_ar.to_dict()
    _write_report(args, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longspoof",
        description=(
            "Generate long-form noisy partially-spoofed audio datasets and "
            "evaluate detection/localization score files."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic-source", help="emit a labeled synthetic source corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--train", help="BONAFIDE,SPOOFED clip counts")
    p.add_argument("--dev", help="BONAFIDE,SPOOFED clip counts")
    p.add_argument("--eval", help="BONAFIDE,SPOOFED clip counts")
    p.add_argument("--speakers", type=int, default=8)
    p.add_argument("--dur-min", type=float, default=2.0)
    p.add_argument("--dur-max", type=float, default=10.0)
    p.add_argument("--active-min", type=float, default=None)
    p.add_argument("--active-max", type=float, default=None)
    p.add_argument("--noise-per-category", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic_source)

    p = sub.add_parser("generate", help="compose long-form records from a source manifest")
    p.add_argument("--manifest", required=True, help="source manifest (JSONL)")
    p.add_argument("--out", required=True)
    p.add_argument("--noise-manifest", help="noise-pool manifest (JSONL)")
    p.add_argument("--noise", choices=("on", "off"), default="on")
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=10.0)
    p.add_argument("--mode", choices=("multi", "single"), default="multi")
    p.add_argument("--counts-train", help="BONAFIDE,SPOOFED long-form counts")
    p.add_argument("--counts-dev", help="BONAFIDE,SPOOFED long-form counts")
    p.add_argument("--counts-eval", help="BONAFIDE,SPOOFED long-form counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--data-root", help=f"root for relative paths (or ${DATA_ROOT_ENV})")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="config override, e.g. --set noise.weight_music=0.5",
    )
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("resegment", help="cut long records into N-second windows")
    p.add_argument("--long-manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-seconds", type=float, default=4.0)
    p.add_argument("--annotations", help="override the annotations path")
    p.add_argument("--write-audio", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--data-root")
    p.set_defaults(func=cmd_resegment)

    p = sub.add_parser("score-oracle", help="synthesize label-plus-noise scores for testing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partition", default="all", help="train|dev|eval|all")
    p.set_defaults(func=cmd_score_oracle)

    def eval_common(p):
        p.add_argument("--eval-scores", required=True)
        p.add_argument("--eval-manifest", required=True)
        p.add_argument("--dev-scores", required=True)
        p.add_argument("--dev-manifest", required=True)
        p.add_argument("--eval-partition", default="eval", help="partition filter, or 'all'")
        p.add_argument("--dev-partition", default="dev", help="partition filter, or 'all'")
        p.add_argument("--out-json", help="report path (default: <eval-scores>.report.json)")

    p = sub.add_parser("eval-detect", help="utterance-level EER/HTER from score files")
    eval_common(p)
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("eval-localize", help="window-level EER/HTER, optionally chunk AP/AR")
    eval_common(p)
    p.add_argument("--ap-ar", action="store_true", help="also compute chunk-IoU AP/AR")
    p.add_argument("--resolution", type=float, default=RESOLUTION_S)
    p.add_argument("--annotations", help="long-form annotation file (for --ap-ar)")
    p.add_argument(
        "--binarize-threshold",
        type=float,
        default=None,
        help="proposal threshold (default: dev EER threshold)",
    )
    p.set_defaults(func=cmd_eval_localize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        _log(f"error: {exc}")
        return 2
    except IO_ERRORS as exc:
        _log(f"i/o error: {exc}")
        return 3
    except DATA_ERRORS as exc:
        _log(f"data error: {exc}")
        return 4
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
