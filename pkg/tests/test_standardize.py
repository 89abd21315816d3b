import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longspoof.audio_io import AudioBuffer
from longspoof.standardize import (
    NoActivity,
    active_speech_level,
    normalize_loudness,
    trim_silence,
)

from reference import naive_trim_bounds, rms_db

FS = 16000


def speechish(rng, dur_s=2.0, amp=0.3, f0=180.0):
    t = np.arange(int(dur_s * FS)) / FS
    am = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(2, 5) * t)
    x = amp * am * np.sin(2 * np.pi * f0 * t)
    return AudioBuffer(x)


class TestTrim:
    def test_padded_tone_within_one_hop(self):
        tone = np.sin(2 * np.pi * 440 * np.arange(FS) / FS)
        sig = np.concatenate([np.zeros(FS // 2), tone, np.zeros(FS // 2)])
        out, rep = trim_silence(AudioBuffer(sig), top_db=60, frame_len=512, hop_len=512)
        assert abs(len(out) - FS) <= 512
        start, end = naive_trim_bounds(sig, 60, 512, 512)
        assert (rep.start_sample, rep.end_sample) == (start, end)

    def test_no_silence_spans_everything(self):
        sig = 0.5 * np.sin(2 * np.pi * 300 * np.arange(FS) / FS)
        out, rep = trim_silence(AudioBuffer(sig))
        assert (rep.start_sample, rep.end_sample) == (0, FS)
        assert len(out) == FS

    def test_all_zero_returns_one_frame(self):
        out, rep = trim_silence(AudioBuffer(np.zeros(8000)), frame_len=2048, hop_len=512)
        assert len(out) == 2048
        assert rep.start_sample == 0

    def test_output_is_contiguous_subsequence(self, rng):
        sig = rng.normal(0, 0.1, 20000)
        sig[:4000] = 0
        sig[-3000:] = 0
        out, rep = trim_silence(AudioBuffer(sig))
        assert np.array_equal(out.samples, sig[rep.start_sample : rep.end_sample])

    @settings(max_examples=40, deadline=None)
    @given(
        lead=st.integers(0, 12000),
        tail=st.integers(0, 12000),
        dur=st.integers(2000, 30000),
        frame=st.sampled_from([512, 1024, 2048]),
        hop=st.sampled_from([256, 512]),
    )
    def test_matches_frame_rms_oracle(self, lead, tail, dur, frame, hop):
        rng = np.random.default_rng(lead * 31 + tail * 7 + dur)
        sig = np.concatenate(
            [np.zeros(lead), rng.normal(0, 0.2, dur), np.zeros(tail)]
        )
        _, rep = trim_silence(AudioBuffer(sig), top_db=60, frame_len=frame, hop_len=hop)
        assert (rep.start_sample, rep.end_sample) == naive_trim_bounds(sig, 60, frame, hop)


class TestActiveLevel:
    def test_square_wave_is_full_scale(self):
        sq = np.sign(np.sin(2 * np.pi * 120 * np.arange(2 * FS) / FS))
        sq[sq == 0] = 1.0
        level = active_speech_level(AudioBuffer(sq))
        assert level == pytest.approx(rms_db(sq), abs=0.5)
        assert level == pytest.approx(0.0, abs=0.5)

    def test_low_sine_matches_rms(self):
        sine = 0.2 * np.sin(2 * np.pi * 220 * np.arange(2 * FS) / FS)
        level = active_speech_level(AudioBuffer(sine))
        assert level == pytest.approx(20 * math.log10(0.2 / math.sqrt(2)), abs=0.5)

    def test_all_zero_raises(self):
        with pytest.raises(NoActivity):
            active_speech_level(AudioBuffer(np.zeros(FS)))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            active_speech_level(AudioBuffer(np.ones(100)))

    @settings(max_examples=30, deadline=None)
    @given(k=st.floats(0.1, 1.0, allow_nan=False))
    def test_scaling_covariance(self, k):
        rng = np.random.default_rng(7)
        buf = speechish(rng)
        base = active_speech_level(buf)
        scaled = active_speech_level(AudioBuffer(k * buf.samples))
        assert scaled == pytest.approx(base + 20 * math.log10(k), abs=0.1)

    def test_silence_padding_barely_moves_level(self, rng):
        buf = speechish(rng)
        padded = AudioBuffer(np.concatenate([np.zeros(FS), buf.samples, np.zeros(FS)]))
        assert active_speech_level(padded) == pytest.approx(
            active_speech_level(buf), abs=0.6
        )


class TestNormalize:
    def test_identity_when_already_on_target(self, rng):
        buf = speechish(rng)
        level = active_speech_level(buf)
        _, rep = normalize_loudness(buf, level)
        assert rep.gain_linear == pytest.approx(1.0, abs=0.06)

    def test_ten_db_gap_gives_known_gain(self, rng):
        buf = speechish(rng)
        level = active_speech_level(buf)
        _, rep = normalize_loudness(buf, level + 10.0)
        assert rep.gain_linear == pytest.approx(10 ** 0.5, rel=1e-6)
        assert rep.gain_linear == 10 ** ((rep.target_db - rep.active_level_db) / 20)

    def test_remeasure_hits_target(self, rng):
        for target in (-33.0, -28.5, -23.0):
            buf = speechish(rng, amp=rng.uniform(0.05, 0.6))
            out, _ = normalize_loudness(buf, target)
            assert active_speech_level(out) == pytest.approx(target, abs=0.5)

    def test_idempotent_within_tolerance(self, rng):
        buf = speechish(rng)
        once, _ = normalize_loudness(buf, -26.0)
        _, rep = normalize_loudness(once, -26.0)
        assert abs(20 * math.log10(rep.gain_linear)) <= 0.5

    def test_clipping_risk_flagged_not_clipped(self):
        quiet = AudioBuffer(0.9 * np.sin(2 * np.pi * 200 * np.arange(FS) / FS))
        out, rep = normalize_loudness(quiet, 6.0)
        assert rep.clipping_risk
        assert np.max(np.abs(out.samples)) > 1.0

    def test_propagates_no_activity(self):
        with pytest.raises(NoActivity):
            normalize_loudness(AudioBuffer(np.zeros(FS)), -26.0)
