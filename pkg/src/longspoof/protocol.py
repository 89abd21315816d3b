"""Persistence spine: JSONL manifests, annotations, and seeded RNG streams.

All files are UTF-8 JSONL with a `{"_meta": ...}` header line and are
written atomically (temp file + rename).  Annotation times are stored as
integer sample counts, never float seconds, so round-trips are lossless.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from longspoof import __version__
from longspoof.audio_io import PIPELINE_RATE, wav_info
from longspoof.compose import LABELS, LongFormRecord, SegmentAnnotation, SourceEntry
from longspoof.noise import CATEGORIES, NoiseAssignment, NoiseEntry, NoisePool


class ParseError(Exception):
    """Malformed manifest/annotation/score line; message carries file and line."""


class DuplicateId(Exception):
    pass


@dataclass(frozen=True)
class LongEntry:
    """One long-form record in a generated-dataset manifest."""

    id: str
    path: str
    label: str
    partition: str
    duration: int  # samples
    mode: str
    speaker_id: str | None = None


@dataclass(frozen=True)
class WindowEntry:
    """One N-second window in a re-segmented manifest."""

    id: str
    parent_id: str
    label: str
    partition: str
    start: int  # samples, within the parent record
    end: int
    path: str | None = None


@dataclass
class Manifest:
    entries: list
    metadata: dict

    KINDS = {"source": SourceEntry, "long": LongEntry, "window": WindowEntry}

    @property
    def kind(self) -> str:
        return self.metadata.get("kind", "source")

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def labels_by_id(self) -> dict[str, str]:
        return {e.id: e.label for e in self.entries}


@dataclass
class LongAnnotation:
    longform_id: str
    utterance_label: str
    annotations: list[SegmentAnnotation]


def make_metadata(kind: str, seed: int, config_hash: str, **extra) -> dict:
    meta = {
        "kind": kind,
        "seed": seed,
        "config_hash": config_hash,
        "version": __version__,
        "sample_rate": PIPELINE_RATE,
    }
    meta.update(extra)
    return meta


def _atomic_write_lines(path, lines) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
        os.replace(tmp, path)
    except OSError:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _entry_dict(entry) -> dict:
    return dataclasses.asdict(entry)


def write_manifest(manifest: Manifest, path) -> None:
    lines = [json.dumps({"_meta": manifest.metadata}, sort_keys=True)]
    lines.extend(json.dumps(_entry_dict(e), sort_keys=True) for e in manifest.entries)
    _atomic_write_lines(path, lines)


def _parse_json_line(path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}:{lineno}: expected a JSON object")
    return obj


def _read_header(path, first_line: str) -> dict:
    obj = _parse_json_line(path, 1, first_line)
    if "_meta" not in obj:
        raise ParseError(f"{path}:1: missing _meta header line")
    return obj["_meta"]


def read_manifest(path) -> Manifest:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    if not lines:
        raise ParseError(f"{path}:1: empty file, expected _meta header")
    metadata = _read_header(path, lines[0])
    kind = metadata.get("kind", "source")
    entry_cls = Manifest.KINDS.get(kind)
    if entry_cls is None:
        raise ParseError(f"{path}:1: unknown manifest kind {kind!r}")
    entries = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = _parse_json_line(path, lineno, line)
        try:
            entry = entry_cls(**obj)
        except TypeError as exc:
            raise ParseError(f"{path}:{lineno}: bad {kind} entry: {exc}") from exc
        if entry.label not in LABELS:
            raise ParseError(f"{path}:{lineno}: unknown label {entry.label!r}")
        if entry.id in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate id {entry.id!r}")
        seen.add(entry.id)
        entries.append(entry)
    return Manifest(entries=entries, metadata=metadata)


def _noise_to_dict(noise: NoiseAssignment):
    if noise.is_none:
        return None
    return {
        "category": noise.category,
        "snr_db": noise.snr_db,
        "clip_id": noise.clip_id,
        "offset": noise.offset,
    }


def _noise_from_dict(obj) -> NoiseAssignment:
    if obj is None:
        return NoiseAssignment()
    return NoiseAssignment(
        category=obj["category"],
        snr_db=obj["snr_db"],
        clip_id=obj["clip_id"],
        offset=obj["offset"],
    )


def write_annotations(records, path, metadata: dict) -> None:
    """Persist utterance labels and segment spans; records may be rendered or not."""

    def lines():
        yield json.dumps({"_meta": metadata}, sort_keys=True)
        for rec in records:
            row = {
                "id": rec.longform_id,
                "label": rec.utterance_label,
                "segments": [
                    {
                        "start": a.start,
                        "end": a.end,
                        "label": a.label,
                        "source": a.source_id,
                        "noise": _noise_to_dict(a.noise),
                    }
                    for a in rec.annotations
                ],
            }
            yield json.dumps(row, sort_keys=True)

    _atomic_write_lines(path, lines())


def read_annotations(path) -> tuple[dict, dict[str, LongAnnotation]]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    if not lines:
        raise ParseError(f"{path}:1: empty file, expected _meta header")
    metadata = _read_header(path, lines[0])
    out: dict[str, LongAnnotation] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = _parse_json_line(path, lineno, line)
        try:
            anns = [
                SegmentAnnotation(
                    start=s["start"],
                    end=s["end"],
                    label=s["label"],
                    source_id=s["source"],
                    noise=_noise_from_dict(s["noise"]),
                )
                for s in obj["segments"]
            ]
            rec = LongAnnotation(obj["id"], obj["label"], anns)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}:{lineno}: bad annotation row: {exc}") from exc
        if rec.longform_id in out:
            raise DuplicateId(f"{path}:{lineno}: duplicate id {rec.longform_id!r}")
        out[rec.longform_id] = rec
    return metadata, out


def annotations_of(records: list[LongFormRecord]) -> list[LongAnnotation]:
    return [LongAnnotation(r.longform_id, r.utterance_label, r.annotations) for r in records]


STREAM_NAMES = ("plan", "loudness", "noise", "scoring", "synth")


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """One named, independent generator derived from the master seed."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, int.from_bytes(name.encode("utf-8"), "big")])
    )


def derive_rng_streams(seed: int, names=STREAM_NAMES) -> dict[str, np.random.Generator]:
    """Same seed gives the same streams no matter how work is scheduled."""
    return {name: rng_stream(seed, name) for name in names}


def resolve_path(root, path):
    if root is not None and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def write_noise_pool_manifest(entries: list[NoiseEntry], path) -> None:
    """Plain JSONL, one {id, path, category} per line (no header)."""
    lines = [
        json.dumps({"id": e.clip_id, "path": e.path, "category": e.category}, sort_keys=True)
        for e in entries
    ]
    _atomic_write_lines(path, lines)


def load_noise_pool(path, root=None, cache_clips: int = 32) -> NoisePool:
    """Read a noise-pool manifest and probe each clip's duration from its header."""
    if root is None:
        root = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    entries = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        obj = _parse_json_line(path, lineno, line)
        try:
            clip_id, clip_path, category = obj["id"], obj["path"], obj["category"]
        except KeyError as exc:
            raise ParseError(f"{path}:{lineno}: missing field {exc}") from exc
        if category not in CATEGORIES:
            raise ParseError(f"{path}:{lineno}: unknown noise category {category!r}")
        resolved = resolve_path(root, clip_path)
        frames, _rate = wav_info(resolved)
        entries.append(
            NoiseEntry(clip_id=clip_id, path=resolved, category=category, duration=frames)
        )
    return NoisePool(entries, cache_clips=cache_clips)
