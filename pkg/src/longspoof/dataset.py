"""End-to-end dataset builds: generate long-form records, re-segment windows.

Plans are drawn sequentially from named RNG streams, then rendered (in
parallel if asked); manifests are written in plan order, so worker count
never changes the output bytes.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from longspoof.audio_io import AudioBuffer, load_wav, save_wav
from longspoof.compose import (
    PARTITIONS,
    CompositionPlan,
    LongFormRecord,
    PlanTargets,
    SourceStore,
    plan_dataset,
    render,
)
from longspoof.config import GenerationConfig, config_hash
from longspoof.protocol import (
    LongAnnotation,
    LongEntry,
    Manifest,
    ParseError,
    WindowEntry,
    derive_rng_streams,
    load_noise_pool,
    make_metadata,
    read_annotations,
    read_manifest,
    resolve_path,
    write_annotations,
    write_manifest,
)
from longspoof.resegment import segment_windows, window_samples

LONG_MANIFEST = "long_manifest.jsonl"
ANNOTATIONS = "annotations.jsonl"
WINDOW_MANIFEST = "window_manifest.jsonl"


def generate_dataset(
    source_manifest_path,
    out_dir,
    config: GenerationConfig,
    counts: dict[str, PlanTargets],
    seed: int,
    noise_manifest_path=None,
    data_root=None,
    jobs: int = 1,
) -> tuple[str, str]:
    """Build long-form WAVs plus manifest and annotations under out_dir.

    counts maps partition name to PlanTargets; partitions are always
    planned in the fixed train/dev/eval order so the RNG consumption, and
    therefore the dataset, is reproducible.
    """
    config.validate()
    source = read_manifest(source_manifest_path)
    if data_root is None:
        data_root = os.path.dirname(os.path.abspath(source_manifest_path))
    pool = None
    if noise_manifest_path is not None:
        pool = load_noise_pool(noise_manifest_path)
    streams = derive_rng_streams(seed)

    ordered = [p for p in PARTITIONS if p in counts]
    ordered += [p for p in sorted(counts) if p not in PARTITIONS]
    planned: list[tuple[str, CompositionPlan]] = []
    for partition in ordered:
        targets = counts[partition]
        if targets.bonafide == 0 and targets.spoofed == 0:
            continue
        part_entries = [e for e in source.entries if e.partition == partition]
        plans = plan_dataset(
            part_entries, targets, config, pool, streams, id_prefix=f"{partition}_long_"
        )
        planned.extend((partition, plan) for plan in plans)

    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    store = SourceStore(source.entries, root=data_root, config=config)

    def render_one(item: tuple[str, CompositionPlan]):
        partition, plan = item
        rec = render(plan, store, pool)
        rel = os.path.join("wav", f"{plan.longform_id}.wav")
        save_wav(rec.audio, os.path.join(out_dir, rel))
        entry = LongEntry(
            id=plan.longform_id,
            path=rel,
            label=plan.utterance_label,
            partition=partition,
            duration=rec.duration,
            mode=plan.mode,
            speaker_id=plan.speaker_id,
        )
        return entry, LongAnnotation(plan.longform_id, rec.utterance_label, rec.annotations)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            results = list(pool_exec.map(render_one, planned))
    else:
        results = [render_one(item) for item in planned]

    h = config_hash(config)
    metadata = make_metadata(
        "long", seed, h, mode=config.mode, annotations=ANNOTATIONS, source=str(source_manifest_path)
    )
    manifest_path = os.path.join(out_dir, LONG_MANIFEST)
    annotations_path = os.path.join(out_dir, ANNOTATIONS)
    write_manifest(Manifest([e for e, _ in results], metadata), manifest_path)
    write_annotations(
        [a for _, a in results], annotations_path, make_metadata("annotations", seed, h)
    )
    return manifest_path, annotations_path


def resegment_dataset(
    long_manifest_path,
    out_dir,
    n_seconds: float,
    annotations_path=None,
    data_root=None,
    write_audio: bool = False,
    jobs: int = 1,
) -> str:
    """Cut every long record into N-second windows; write the window manifest."""
    manifest = read_manifest(long_manifest_path)
    if manifest.kind != "long":
        raise ParseError(f"{long_manifest_path}: expected a long manifest, got {manifest.kind!r}")
    root = data_root or os.path.dirname(os.path.abspath(long_manifest_path))
    if annotations_path is None:
        rel = manifest.metadata.get("annotations")
        if rel is None:
            raise ParseError(f"{long_manifest_path}: metadata lacks an annotations path")
        annotations_path = resolve_path(root, rel)
    _, annotations = read_annotations(annotations_path)

    win = window_samples(n_seconds)
    os.makedirs(out_dir, exist_ok=True)
    if write_audio:
        os.makedirs(os.path.join(out_dir, "windows"), exist_ok=True)

    def windows_of(entry) -> list[WindowEntry]:
        ann = annotations.get(entry.id)
        if ann is None:
            raise ParseError(f"{annotations_path}: no annotation row for {entry.id!r}")
        audio = load_wav(resolve_path(root, entry.path)) if write_audio else None
        rec = LongFormRecord(entry.id, audio, ann.annotations, ann.utterance_label)
        out = []
        for w in segment_windows(rec, n_seconds, with_audio=write_audio):
            path = None
            if write_audio:
                path = os.path.join("windows", f"{w.window_id}.wav")
                save_wav(w.audio, os.path.join(out_dir, path))
            out.append(
                WindowEntry(
                    id=w.window_id,
                    parent_id=entry.id,
                    label=w.label,
                    partition=entry.partition,
                    start=w.start,
                    end=w.end,
                    path=path,
                )
            )
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            per_parent = list(pool_exec.map(windows_of, manifest.entries))
    else:
        per_parent = [windows_of(e) for e in manifest.entries]
    entries = [w for group in per_parent for w in group]

    ann_rel = os.path.relpath(os.path.abspath(annotations_path), os.path.abspath(out_dir))
    metadata = make_metadata(
        "window",
        manifest.metadata.get("seed", 0),
        manifest.metadata.get("config_hash", ""),
        n_seconds=n_seconds,
        window_samples=win,
        annotations=ann_rel,
        parent_manifest=str(long_manifest_path),
    )
    path = os.path.join(out_dir, WINDOW_MANIFEST)
    write_manifest(Manifest(entries, metadata), path)
    return path


def filter_partition(manifest: Manifest, partition: str) -> Manifest:
    """Manifest restricted to one partition ("all" keeps everything)."""
    if partition == "all":
        return manifest
    entries = [e for e in manifest.entries if e.partition == partition]
    return Manifest(entries, dict(manifest.metadata))


def load_audio_for(entry, root) -> AudioBuffer:
    return load_wav(resolve_path(root, entry.path))
