"""Stage-4 re-segmentation: uniform N-second windows with residual discard.

Window boundaries live on the k*N grid in samples, and a window is
spoof-labeled iff it overlaps spoofed content by at least one sample;
touching a boundary does not count.
"""

from __future__ import annotations

from dataclasses import dataclass

from longspoof.audio_io import PIPELINE_RATE, AudioBuffer
from longspoof.compose import BONAFIDE, SPOOFED, LongFormRecord, SegmentAnnotation


@dataclass
class WindowRecord:
    window_id: str
    parent_id: str
    start: int  # samples
    end: int
    label: str
    audio: AudioBuffer | None = None

    @property
    def start_s(self) -> float:
        return self.start / PIPELINE_RATE

    @property
    def end_s(self) -> float:
        return self.end / PIPELINE_RATE


def window_samples(n_seconds: float, sample_rate: int = PIPELINE_RATE) -> int:
    """Window length in samples; N as small as one sample is allowed."""
    win = round(n_seconds * sample_rate)
    if win < 1:
        raise ValueError(f"window of {n_seconds} s is shorter than one sample")
    return win


def window_label(annotations: list[SegmentAnnotation], start: int, end: int) -> str:
    """Spoofed iff some spoofed annotation overlaps [start, end) with positive length."""
    for ann in annotations:
        if ann.label == SPOOFED and max(start, ann.start) < min(end, ann.end):
            return SPOOFED
    return BONAFIDE


def segment_windows(
    rec: LongFormRecord, n_seconds: float, with_audio: bool = False
) -> list[WindowRecord]:
    """Cut floor(duration / N) windows at offsets 0, N, 2N, ...; the tail is dropped."""
    win = window_samples(n_seconds)
    duration = rec.duration
    count = duration // win
    out = []
    for k in range(count):
        start, end = k * win, (k + 1) * win
        audio = None
        if with_audio:
            if rec.audio is None:
                raise ValueError(f"{rec.longform_id}: audio requested but record has none")
            audio = AudioBuffer(rec.audio.samples[start:end], rec.audio.sample_rate)
        out.append(
            WindowRecord(
                window_id=f"{rec.longform_id}_w{k:04d}",
                parent_id=rec.longform_id,
                start=start,
                end=end,
                label=window_label(rec.annotations, start, end),
                audio=audio,
            )
        )
    return out
