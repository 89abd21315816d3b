"""Stage-3 composition: plan long-form records, then render them to audio.

Planning draws every random choice (segment ids, per-segment loudness
targets, noise assignments) up front into CompositionPlan objects, so
rendering is a pure function of (plan, sources, noise pool) and can run
on any number of workers without changing the output.
"""

from __future__ import annotations

import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from longspoof.audio_io import AudioBuffer, AudioIoError, load_wav
from longspoof.config import MODE_SINGLE, GenerationConfig
from longspoof.noise import NoiseAssignment, NoisePool, draw_assignment, fit_noise_length, snr_gain
from longspoof.standardize import active_speech_level, trim_silence

BONAFIDE = "bonafide"
SPOOFED = "spoofed"
LABELS = (BONAFIDE, SPOOFED)

PARTITIONS = ("train", "dev", "eval")


class InsufficientSources(Exception):
    """Not enough labeled source material for the requested plans."""


class RenderError(Exception):
    """A segment failed to render; message carries plan and segment context."""


@dataclass(frozen=True)
class SourceEntry:
    """One short source clip as listed in a source manifest."""

    id: str
    path: str
    speaker_id: str
    label: str
    partition: str


@dataclass(frozen=True)
class PlanTargets:
    bonafide: int
    spoofed: int


@dataclass(frozen=True)
class CompositionPlan:
    """Everything needed to render one long-form record, randomness included."""

    longform_id: str
    utterance_label: str
    segment_ids: tuple[str, ...]
    segment_labels: tuple[str, ...]
    target_db: tuple[float, ...]
    noise: tuple[NoiseAssignment, ...]
    mode: str
    speaker_id: str | None = None

    def validate(self, bonafide_in_spoofed: int = 3) -> None:
        n = len(self.segment_ids)
        if not (len(self.segment_labels) == len(self.target_db) == len(self.noise) == n):
            raise ValueError(f"{self.longform_id}: ragged plan fields")
        n_bona = sum(1 for l in self.segment_labels if l == BONAFIDE)
        if self.utterance_label == BONAFIDE and n_bona != n:
            raise ValueError(f"{self.longform_id}: bonafide plan with spoofed segments")
        if self.utterance_label == SPOOFED and n_bona != bonafide_in_spoofed:
            raise ValueError(f"{self.longform_id}: expected {bonafide_in_spoofed} bonafide segments")


@dataclass(frozen=True)
class SegmentAnnotation:
    """One segment's span inside a long-form record, in samples."""

    start: int
    end: int
    label: str
    source_id: str
    noise: NoiseAssignment = field(default_factory=NoiseAssignment)

    @property
    def start_s(self) -> float:
        return self.start / 16000.0

    @property
    def end_s(self) -> float:
        return self.end / 16000.0


@dataclass
class LongFormRecord:
    longform_id: str
    audio: AudioBuffer | None
    annotations: list[SegmentAnnotation]
    utterance_label: str

    @property
    def duration(self) -> int:
        """Length in samples; annotations tile [0, duration)."""
        return self.annotations[-1].end if self.annotations else 0

    def validate(self) -> None:
        if not self.annotations:
            raise ValueError(f"{self.longform_id}: no annotations")
        cursor = 0
        for ann in self.annotations:
            if ann.start != cursor or ann.end <= ann.start:
                raise ValueError(f"{self.longform_id}: annotations do not tile the record")
            cursor = ann.end
        if self.audio is not None and len(self.audio) != cursor:
            raise ValueError(f"{self.longform_id}: audio length differs from annotation span")
        if derive_utterance_label(self.annotations) != self.utterance_label:
            raise ValueError(f"{self.longform_id}: utterance label inconsistent with segments")


def derive_utterance_label(annotations) -> str:
    """Spoofed iff any segment is spoofed."""
    return SPOOFED if any(a.label == SPOOFED for a in annotations) else BONAFIDE


class SourceStore:
    """Source lookup with a size-capped cache of standardized (trimmed) audio.

    Trim and level measurement are deterministic per clip, so caching them
    cannot change render output, only speed.  Thread-safe for parallel
    renders; the budget is counted in cached samples.
    """

    def __init__(
        self,
        entries: list[SourceEntry],
        root=None,
        config: GenerationConfig | None = None,
        cache_budget_samples: int = 200_000_000,
    ):
        self.config = config or GenerationConfig()
        self.root = root
        self.by_id: dict[str, SourceEntry] = {}
        for e in entries:
            if e.id in self.by_id:
                raise ValueError(f"duplicate source id {e.id!r}")
            self.by_id[e.id] = e
        self._cache: OrderedDict[str, tuple[np.ndarray, float]] = OrderedDict()
        self._cached_samples = 0
        self._budget = cache_budget_samples
        self._lock = threading.Lock()

    def resolve(self, source_id: str) -> str:
        path = self.by_id[source_id].path
        if self.root is not None and not os.path.isabs(path):
            return os.path.join(self.root, path)
        return path

    def prepared(self, source_id: str) -> tuple[np.ndarray, float]:
        """Trimmed samples plus their measured active speech level (dBFS)."""
        with self._lock:
            hit = self._cache.get(source_id)
            if hit is not None:
                self._cache.move_to_end(source_id)
                return hit
        buf = load_wav(self.resolve(source_id))
        cfg = self.config
        trimmed, _ = trim_silence(buf, cfg.top_db, cfg.frame_len, cfg.hop_len)
        level = active_speech_level(trimmed)
        samples = trimmed.samples
        samples.flags.writeable = False
        with self._lock:
            if source_id not in self._cache:
                self._cache[source_id] = (samples, level)
                self._cached_samples += len(samples)
                while self._cached_samples > self._budget and len(self._cache) > 1:
                    _, (old, _lvl) = self._cache.popitem(last=False)
                    self._cached_samples -= len(old)
        return samples, level

    def trimmed_len(self, source_id: str) -> int:
        return len(self.prepared(source_id)[0])


def _eligible_speakers(entries: list[SourceEntry], need_both: bool) -> list[str]:
    have: dict[str, set[str]] = {}
    for e in entries:
        have.setdefault(e.speaker_id, set()).add(e.label)
    needed = {BONAFIDE, SPOOFED} if need_both else {BONAFIDE}
    return sorted(s for s, labels in have.items() if needed <= labels)


def plan_dataset(
    entries: list[SourceEntry],
    targets: PlanTargets,
    config: GenerationConfig,
    pool: NoisePool | None,
    streams: dict[str, np.random.Generator],
    id_prefix: str = "long",
) -> list[CompositionPlan]:
    """Emit bonafide plans then spoofed plans, drawing sources with replacement.

    Segment choice, loudness targets, and noise come from separate named
    streams, so turning noise off leaves the composition itself unchanged.
    """
    config.validate()
    rng_plan = streams["plan"]
    rng_loud = streams["loudness"]
    rng_noise = streams["noise"]
    n_seg = config.segments_per_long
    n_bona_in_spoofed = config.bonafide_in_spoofed
    single = config.mode == MODE_SINGLE

    bona_all = [e for e in entries if e.label == BONAFIDE]
    spoof_all = [e for e in entries if e.label == SPOOFED]
    if targets.bonafide > 0 and not bona_all:
        raise InsufficientSources("no bonafide source entries")
    if targets.spoofed > 0 and (not spoof_all or (n_bona_in_spoofed > 0 and not bona_all)):
        raise InsufficientSources("spoofed plans need both bonafide and spoofed entries")

    by_speaker: dict[str, dict[str, list[SourceEntry]]] = {}
    if single:
        for e in entries:
            by_speaker.setdefault(e.speaker_id, {}).setdefault(e.label, []).append(e)

    def pick(pool_entries: list[SourceEntry], count: int) -> list[SourceEntry]:
        idx = rng_plan.integers(len(pool_entries), size=count)
        return [pool_entries[i] for i in idx]

    plans: list[CompositionPlan] = []
    specs = [(BONAFIDE, i) for i in range(targets.bonafide)]
    specs += [(SPOOFED, i) for i in range(targets.spoofed)]
    for seq, (utt_label, _i) in enumerate(specs):
        speaker = None
        if single:
            eligible = _eligible_speakers(entries, need_both=(utt_label == SPOOFED))
            if not eligible:
                raise InsufficientSources(
                    f"single-speaker mode: no speaker has the labels needed for a {utt_label} record"
                )
            speaker = eligible[rng_plan.integers(len(eligible))]
            bona_pool = by_speaker[speaker].get(BONAFIDE, [])
            spoof_pool = by_speaker[speaker].get(SPOOFED, [])
        else:
            bona_pool, spoof_pool = bona_all, spoof_all

        if utt_label == BONAFIDE:
            chosen = pick(bona_pool, n_seg)
        else:
            chosen = pick(bona_pool, n_bona_in_spoofed)
            chosen += pick(spoof_pool, n_seg - n_bona_in_spoofed)
            order = rng_plan.permutation(n_seg)
            chosen = [chosen[i] for i in order]

        targets_db = tuple(
            float(t) for t in rng_loud.uniform(config.target_db_min, config.target_db_max, n_seg)
        )
        assignments = tuple(draw_assignment(rng_noise, config.noise, pool) for _ in range(n_seg))
        plans.append(
            CompositionPlan(
                longform_id=f"{id_prefix}{seq:06d}",
                utterance_label=utt_label,
                segment_ids=tuple(e.id for e in chosen),
                segment_labels=tuple(e.label for e in chosen),
                target_db=targets_db,
                noise=assignments,
                mode=config.mode,
                speaker_id=speaker,
            )
        )
    return plans


def render_segment(
    samples: np.ndarray, level_db: float, target_db: float, assignment: NoiseAssignment, pool
) -> np.ndarray:
    """Apply the planned gain, then the planned noise, to one prepared source."""
    gain = 10.0 ** ((target_db - level_db) / 20.0)
    seg = samples * gain
    if not assignment.is_none:
        fitted = fit_noise_length(pool.audio(assignment.clip_id), len(seg), assignment.offset)
        alpha = snr_gain(seg, fitted, assignment.snr_db)
        seg = seg + alpha * fitted
    return seg


def render(plan: CompositionPlan, store: SourceStore, pool: NoisePool | None) -> LongFormRecord:
    """Concatenate the plan's standardized, augmented segments; no crossfade.

    Boundaries are cumulative sample counts, which keeps the spoof-region
    ground truth sample-exact.
    """
    pieces: list[np.ndarray] = []
    annotations: list[SegmentAnnotation] = []
    cursor = 0
    for i, sid in enumerate(plan.segment_ids):
        try:
            samples, level = store.prepared(sid)
            seg = render_segment(samples, level, plan.target_db[i], plan.noise[i], pool)
        except AudioIoError as exc:
            raise type(exc)(f"{plan.longform_id} segment {i} ({sid}): {exc}") from exc
        except Exception as exc:
            raise RenderError(f"{plan.longform_id} segment {i} ({sid}): {exc}") from exc
        pieces.append(seg)
        annotations.append(
            SegmentAnnotation(
                start=cursor,
                end=cursor + len(seg),
                label=plan.segment_labels[i],
                source_id=sid,
                noise=plan.noise[i],
            )
        )
        cursor += len(seg)
    audio = AudioBuffer(np.concatenate(pieces))
    return LongFormRecord(
        longform_id=plan.longform_id,
        audio=audio,
        annotations=annotations,
        utterance_label=plan.utterance_label,
    )
