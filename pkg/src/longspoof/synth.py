"""Synthetic labeled source clips and noise pools.

Generates speech-shaped harmonic tones (bonafide) and buzzier variants
(spoofed) padded with silence, plus babble/music/noise clips, so the full
pipeline and its tests run without any licensed corpus.  Everything is a
pure function of the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from longspoof.audio_io import PIPELINE_RATE, AudioBuffer, save_wav
from longspoof.compose import BONAFIDE, SPOOFED, SourceEntry
from longspoof.config import config_hash
from longspoof.noise import CATEGORIES, NoiseEntry


@dataclass
class SynthConfig:
    speakers: int = 8
    dur_min_s: float = 2.0
    dur_max_s: float = 10.0
    # Active-portion bounds; None means a fraction of the clip duration.
    active_min_s: float | None = None
    active_max_s: float | None = None
    noise_per_category: int = 4
    noise_dur_min_s: float = 3.0
    noise_dur_max_s: float = 8.0


def _speaker_f0(speaker_idx: int) -> float:
    return 95.0 + 13.0 * (speaker_idx % 12)


def _voiced(rng: np.random.Generator, n: int, f0: float, spoofed: bool) -> np.ndarray:
    fs = PIPELINE_RATE
    t = np.arange(n) / fs
    vib = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4.0, 6.0) * t)
    phase = 2 * np.pi * f0 * np.cumsum(vib) / fs
    if spoofed:
        sig = np.zeros(n)
        for k, w in ((1, 0.5), (3, 0.45), (5, 0.35), (7, 0.25)):
            sig += w * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
        sig += 0.3 * np.sign(np.sin(phase))
    else:
        sig = np.zeros(n)
        for k in range(1, 6):
            sig += (1.0 / k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    am = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    sig = sig * am
    ramp = min(80, n // 4)
    if ramp:
        env = np.ones(n)
        env[:ramp] = np.linspace(0.0, 1.0, ramp)
        env[-ramp:] = np.linspace(1.0, 0.0, ramp)
        sig = sig * env
    return sig


def make_source_clip(
    rng: np.random.Generator, cfg: SynthConfig, speaker_idx: int, label: str
) -> AudioBuffer:
    fs = PIPELINE_RATE
    dur = rng.uniform(cfg.dur_min_s, cfg.dur_max_s)
    n = max(int(round(dur * fs)), fs // 4)
    lo = cfg.active_min_s if cfg.active_min_s is not None else 0.55 * dur
    hi = cfg.active_max_s if cfg.active_max_s is not None else 0.85 * dur
    active = rng.uniform(lo, hi)
    n_active = int(round(min(active, dur - 0.1) * fs))
    n_active = max(min(n_active, n - 2), fs // 8)
    lead = int(rng.integers(0, n - n_active + 1))
    voice = _voiced(rng, n_active, _speaker_f0(speaker_idx), spoofed=(label == SPOOFED))
    rms = float(np.sqrt(np.mean(voice**2)))
    target_rms = 10.0 ** (rng.uniform(-30.0, -16.0) / 20.0)
    voice = voice * (target_rms / rms)
    peak = float(np.max(np.abs(voice)))
    if peak > 0.97:
        voice = voice * (0.97 / peak)
    out = np.zeros(n)
    out[lead : lead + n_active] = voice
    return AudioBuffer(out)


def _babble(rng: np.random.Generator, n: int) -> np.ndarray:
    fs = PIPELINE_RATE
    t = np.arange(n) / fs
    sig = np.zeros(n)
    for _ in range(8):
        f0 = rng.uniform(100.0, 260.0)
        am = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(2.5, 7.0) * t + rng.uniform(0, 2 * np.pi))
        sig += am * np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    return sig


def _music(rng: np.random.Generator, n: int) -> np.ndarray:
    fs = PIPELINE_RATE
    t = np.arange(n) / fs
    root = rng.uniform(130.0, 330.0)
    sig = np.zeros(n)
    for ratio in (1.0, 1.25, 1.5, 2.0):
        sig += np.sin(2 * np.pi * root * ratio * t + rng.uniform(0, 2 * np.pi))
    trem = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t)
    return sig * trem


def _environmental(rng: np.random.Generator, n: int) -> np.ndarray:
    white = rng.standard_normal(n)
    brown = np.cumsum(white)
    brown = brown - np.mean(brown)
    brown = brown / (np.max(np.abs(brown)) + 1e-12)
    return 0.7 * brown + 0.3 * (white / (np.max(np.abs(white)) + 1e-12))


_NOISE_SYNTH = {"babble": _babble, "music": _music, "noise": _environmental}


def make_noise_clip(rng: np.random.Generator, cfg: SynthConfig, category: str) -> AudioBuffer:
    fs = PIPELINE_RATE
    n = int(round(rng.uniform(cfg.noise_dur_min_s, cfg.noise_dur_max_s) * fs))
    sig = _NOISE_SYNTH[category](rng, n)
    sig = sig * (0.08 / (np.sqrt(np.mean(sig**2)) + 1e-12))
    peak = float(np.max(np.abs(sig)))
    if peak > 0.97:
        sig = sig * (0.97 / peak)
    return AudioBuffer(sig)


def make_synthetic_source(
    out_dir,
    counts: dict[str, tuple[int, int]],
    cfg: SynthConfig,
    rng: np.random.Generator,
    seed: int,
):
    """Write WAVs plus source and noise-pool manifests under out_dir.

    counts maps partition name to (bonafide, spoofed) clip counts.
    Speakers are assigned round-robin so every speaker carries both labels
    whenever each count reaches the speaker count.  Returns the source
    entries, noise entries, and manifest metadata.
    """
    wav_dir = os.path.join(out_dir, "wav")
    noise_dir = os.path.join(out_dir, "noise")
    os.makedirs(wav_dir, exist_ok=True)
    os.makedirs(noise_dir, exist_ok=True)

    entries: list[SourceEntry] = []
    for partition in sorted(counts):
        n_bona, n_spoof = counts[partition]
        for label, n_clips, tag in ((BONAFIDE, n_bona, "b"), (SPOOFED, n_spoof, "s")):
            for i in range(n_clips):
                speaker_idx = i % cfg.speakers
                clip = make_source_clip(rng, cfg, speaker_idx, label)
                clip_id = f"src_{partition}_{tag}{i:05d}"
                rel = os.path.join("wav", f"{clip_id}.wav")
                save_wav(clip, os.path.join(out_dir, rel))
                entries.append(
                    SourceEntry(
                        id=clip_id,
                        path=rel,
                        speaker_id=f"spk{speaker_idx:03d}",
                        label=label,
                        partition=partition,
                    )
                )

    noise_entries: list[NoiseEntry] = []
    for category in CATEGORIES:
        for i in range(cfg.noise_per_category):
            clip = make_noise_clip(rng, cfg, category)
            clip_id = f"noise_{category}{i:03d}"
            rel = os.path.join("noise", f"{clip_id}.wav")
            save_wav(clip, os.path.join(out_dir, rel))
            noise_entries.append(
                NoiseEntry(clip_id=clip_id, path=rel, category=category, duration=len(clip))
            )

    metadata = {"synth_config_hash": config_hash(cfg), "seed": seed}
    return entries, noise_entries, metadata
