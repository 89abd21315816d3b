"""Stage-1 standardization: silence trimming and loudness normalization.

Loudness is measured with the ITU-T P.56 Method B active speech level,
so silence and pauses do not drag the estimate down.  Normalization is a
pure gain; samples are never clipped here (clamping happens at save).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from longspoof.audio_io import AudioBuffer

P56_TIME_CONSTANT_S = 0.03
P56_HANGOVER_S = 0.2
P56_MARGIN_DB = 15.9
P56_THRESHOLD_COUNT = 15


class NoActivity(Exception):
    """No P.56 threshold detected any speech activity (e.g. all-zero input)."""


@dataclass
class TrimReport:
    start_sample: int
    end_sample: int
    original_len: int


@dataclass
class LoudnessReport:
    active_level_db: float
    target_db: float
    gain_linear: float
    clipping_risk: bool = False


def _frame_rms(x: np.ndarray, frame_len: int, hop_len: int) -> np.ndarray:
    """RMS of frames at offsets k*hop_len; the tail frame may be short."""
    n = len(x)
    n_frames = -(-n // hop_len)
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    starts = np.arange(n_frames) * hop_len
    ends = np.minimum(starts + frame_len, n)
    energy = csum[ends] - csum[starts]
    return np.sqrt(energy / (ends - starts))


def trim_silence(
    buf: AudioBuffer,
    top_db: float = 60.0,
    frame_len: int = 2048,
    hop_len: int = 512,
) -> tuple[AudioBuffer, TrimReport]:
    """Drop leading and trailing frames quieter than top_db below the loudest frame.

    Interior silence is kept.  If every frame is below threshold (all-zero
    input), the single loudest frame is returned so the result is never empty.
    """
    if len(buf) == 0:
        raise ValueError("cannot trim an empty buffer")
    if not (frame_len >= hop_len >= 1):
        raise ValueError("need frame_len >= hop_len >= 1")
    rms = _frame_rms(buf.samples, frame_len, hop_len)
    thresh = rms.max() * 10.0 ** (-top_db / 20.0)
    active = np.flatnonzero(rms > thresh)
    if active.size:
        first, last = active[0], active[-1]
    else:
        first = last = int(np.argmax(rms))
    start = first * hop_len
    end = min(len(buf), last * hop_len + frame_len)
    report = TrimReport(start_sample=start, end_sample=end, original_len=len(buf))
    return AudioBuffer(buf.samples[start:end], buf.sample_rate), report


def _p56_envelope(x: np.ndarray, sample_rate: int) -> np.ndarray:
    g = math.exp(-1.0 / (sample_rate * P56_TIME_CONSTANT_S))
    b, a = [1.0 - g], [1.0, -g]
    p = lfilter(b, a, np.abs(x))
    return lfilter(b, a, p)


def _activity_mask(above: np.ndarray, hangover: int) -> np.ndarray:
    """A sample is active if the envelope exceeded the threshold within the hangover window."""
    idx = np.arange(len(above))
    last_true = np.maximum.accumulate(np.where(above, idx, -1))
    return (last_true >= 0) & (idx - last_true <= hangover)


def active_speech_level(buf: AudioBuffer) -> float:
    """ITU-T P.56 Method B active speech level in dBFS.

    Cascaded binary thresholds c_j = 2^-j are scanned from the quietest
    up; the level is interpolated (linearly in dB) where the gap between
    the measured active level and the threshold hits the 15.9 dB margin.
    """
    if len(buf) < 160:
        raise ValueError("need at least 10 ms of audio")
    x = buf.samples
    env = _p56_envelope(x, buf.sample_rate)
    hangover = round(P56_HANGOVER_S * buf.sample_rate)
    sq = x * x

    rungs = []  # (A_j, C_j) in ascending threshold order
    for j in range(P56_THRESHOLD_COUNT, 0, -1):
        c = 2.0**-j
        active = _activity_mask(env > c, hangover)
        count = int(np.count_nonzero(active))
        if count == 0:
            break
        a_db = 10.0 * math.log10(sq[active].sum() / count)
        rungs.append((a_db, 20.0 * math.log10(c)))
    if not rungs:
        raise NoActivity("no P.56 threshold detected activity")

    prev_a = prev_delta = None
    for a_db, c_db in rungs:
        delta = a_db - c_db
        if delta <= P56_MARGIN_DB:
            if prev_a is None:
                return a_db
            t = (prev_delta - P56_MARGIN_DB) / (prev_delta - delta)
            return prev_a + t * (a_db - prev_a)
        prev_a, prev_delta = a_db, delta
    # Margin never reached: quietest usable estimate is the loudest rung.
    return rungs[-1][0]


def normalize_loudness(
    buf: AudioBuffer, target_db: float
) -> tuple[AudioBuffer, LoudnessReport]:
    """Scale the buffer so its P.56 active level lands on target_db.

    Gains above unity can push samples past full scale; that is flagged in
    the report, not clipped, so downstream mixing stays linear.
    """
    level = active_speech_level(buf)
    gain = 10.0 ** ((target_db - level) / 20.0)
    out = buf.samples * gain
    report = LoudnessReport(
        active_level_db=level,
        target_db=target_db,
        gain_linear=gain,
        clipping_risk=bool(np.any(np.abs(out) > 1.0)),
    )
    return AudioBuffer(out, buf.sample_rate), report
