"""Stage-2 noise augmentation: random per-segment assignment and SNR-exact mixing.

Each segment gets either no noise or exactly one category drawn from a
weighted distribution; the SNR is defined over the full-segment RMS of
speech vs the scaled noise, so the achieved value is exact by construction.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from longspoof.audio_io import AudioBuffer, load_wav

CATEGORIES = ("babble", "music", "noise")
OUTCOMES = ("none",) + CATEGORIES


class EmptyCategory(Exception):
    """A noise category was drawn but the pool has no clips for it."""


class SilentNoise(Exception):
    """Noise clip has zero RMS; SNR scaling is undefined."""


@dataclass
class NoiseConfig:
    snr_min_db: float = 0.0
    snr_max_db: float = 10.0
    # Draw weights over (none, babble, music, noise); normalized at use.
    weight_none: float = 0.25
    weight_babble: float = 0.25
    weight_music: float = 0.25
    weight_noise: float = 0.25

    def outcome_weights(self) -> np.ndarray:
        w = np.array(
            [self.weight_none, self.weight_babble, self.weight_music, self.weight_noise],
            dtype=np.float64,
        )
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("category weights must be nonnegative and sum > 0")
        return w / w.sum()


@dataclass(frozen=True)
class NoiseAssignment:
    """Noise drawn for one segment; category None means the segment stays clean."""

    category: str | None = None
    snr_db: float = 0.0
    clip_id: str | None = None
    offset: int = 0

    @property
    def is_none(self) -> bool:
        return self.category is None


@dataclass(frozen=True)
class NoiseEntry:
    clip_id: str
    path: str
    category: str
    duration: int  # samples


class NoisePool:
    """Categorized noise clips with lazy, thread-safe audio loading.

    The pool itself is immutable after construction; only the read-through
    audio cache mutates, guarded by a lock so renders can share one pool.
    """

    def __init__(self, entries: list[NoiseEntry], cache_clips: int = 32):
        self.by_category: dict[str, list[NoiseEntry]] = {c: [] for c in CATEGORIES}
        self.by_id: dict[str, NoiseEntry] = {}
        for e in entries:
            if e.category not in self.by_category:
                raise ValueError(f"unknown noise category {e.category!r}")
            if e.clip_id in self.by_id:
                raise ValueError(f"duplicate noise clip id {e.clip_id!r}")
            self.by_category[e.category].append(e)
            self.by_id[e.clip_id] = e
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._cache_clips = cache_clips
        self._lock = threading.Lock()

    def require_nonempty(self) -> None:
        for cat, clips in self.by_category.items():
            if not clips:
                raise EmptyCategory(f"noise pool has no clips in category {cat!r}")

    def audio(self, clip_id: str) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(clip_id)
            if cached is not None:
                self._cache.move_to_end(clip_id)
                return cached
        samples = load_wav(self.by_id[clip_id].path).samples
        samples.flags.writeable = False
        with self._lock:
            self._cache[clip_id] = samples
            while len(self._cache) > self._cache_clips:
                self._cache.popitem(last=False)
        return samples


def draw_assignment(
    rng: np.random.Generator, config: NoiseConfig, pool: NoisePool | None
) -> NoiseAssignment:
    """Draw one segment's noise: outcome by weight, then SNR, clip, and offset uniformly."""
    weights = config.outcome_weights()
    outcome = OUTCOMES[rng.choice(len(OUTCOMES), p=weights)]
    if outcome == "none":
        return NoiseAssignment()
    if pool is None:
        raise EmptyCategory("noise drawn but no pool configured")
    clips = pool.by_category[outcome]
    if not clips:
        raise EmptyCategory(f"noise pool has no clips in category {outcome!r}")
    snr = rng.uniform(config.snr_min_db, config.snr_max_db)
    clip = clips[rng.integers(len(clips))]
    offset = int(rng.integers(max(clip.duration, 1)))
    return NoiseAssignment(category=outcome, snr_db=float(snr), clip_id=clip.clip_id, offset=offset)


def fit_noise_length(noise: np.ndarray, target_len: int, offset: int) -> np.ndarray:
    """Crop at a wrapped offset when the clip is long enough, else tile and crop."""
    n = len(noise)
    if n == 0:
        raise ValueError("noise is empty")
    if n >= target_len:
        start = offset % (n - target_len + 1)
        return noise[start : start + target_len]
    reps = -(-target_len // n)
    return np.tile(noise, reps)[:target_len]


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def snr_gain(speech: np.ndarray, fitted_noise: np.ndarray, snr_db: float) -> float:
    """Scale factor alpha putting the noise exactly snr_db below the speech RMS."""
    noise_rms = _rms(fitted_noise)
    if noise_rms == 0.0:
        raise SilentNoise("fitted noise has zero RMS")
    return _rms(speech) / noise_rms * 10.0 ** (-snr_db / 20.0)


def mix_at_snr(
    speech: AudioBuffer, noise: AudioBuffer, snr_db: float, offset: int = 0
) -> AudioBuffer:
    """Add noise (cropped/tiled to the speech length) at the requested SNR."""
    if len(speech) == 0:
        raise ValueError("speech is empty")
    fitted = fit_noise_length(noise.samples, len(speech), offset)
    alpha = snr_gain(speech.samples, fitted, snr_db)
    return AudioBuffer(speech.samples + alpha * fitted, speech.sample_rate)
