"""Acceptance gate: one test per stated criterion, reported pass/fail by the
conftest terminal summary.  Each test records a "criterion" property so the
summary line names what was verified.
"""

import hashlib
import os
import shutil
import tempfile
import time

import numpy as np
import pytest

import reference as ref
from longspoof.audio_io import AudioBuffer, load_wav, quantize_int16, wav_info
from longspoof.compose import (
    BONAFIDE,
    SPOOFED,
    PlanTargets,
    SegmentAnnotation,
    SourceStore,
    plan_dataset,
    render_segment,
)
from longspoof.config import GenerationConfig
from longspoof.dataset import filter_partition, generate_dataset, resegment_dataset
from longspoof.metrics import AP_TAUS, AR_CAPS, LocalizationEvent, ap_at, ar_at, eer, evaluate_detection
from longspoof.noise import fit_noise_length, snr_gain
from longspoof.protocol import (
    Manifest,
    derive_rng_streams,
    load_noise_pool,
    make_metadata,
    read_annotations,
    read_manifest,
    rng_stream,
    write_manifest,
    write_noise_pool_manifest,
)
from longspoof.resegment import window_samples
from longspoof.scoring import oracle_scorer
from longspoof.standardize import active_speech_level, normalize_loudness
from longspoof.synth import SynthConfig, make_source_clip, make_synthetic_source

SEED = 20260825


@pytest.fixture(scope="module")
def accept_corpus(tmp_path_factory):
    """Synthetic 1 s source clips (the runtime clause of criterion 1)."""
    out = tmp_path_factory.mktemp("accept_corpus")
    cfg = SynthConfig(speakers=8, dur_min_s=1.0, dur_max_s=1.0, noise_per_category=4)
    counts = {"train": (40, 40), "dev": (24, 24), "eval": (24, 24)}
    entries, noise_entries, meta = make_synthetic_source(
        str(out), counts, cfg, rng_stream(SEED, "synth"), SEED
    )
    write_manifest(
        Manifest(entries, make_metadata("source", SEED, meta["synth_config_hash"])),
        out / "source_manifest.jsonl",
    )
    write_noise_pool_manifest(noise_entries, out / "noise_manifest.jsonl")
    return out


def check_composition(manifest_path, annotations_path, counts, config):
    """Shared assertions for criterion 1: exact counts and segment structure."""
    manifest = read_manifest(manifest_path)
    got = {}
    for e in manifest.entries:
        key = (e.partition, e.label)
        got[key] = got.get(key, 0) + 1
    for part, targets in counts.items():
        assert got.get((part, BONAFIDE), 0) == targets.bonafide, part
        assert got.get((part, SPOOFED), 0) == targets.spoofed, part
    assert len(manifest.entries) == sum(t.bonafide + t.spoofed for t in counts.values())

    _, annotations = read_annotations(annotations_path)
    assert set(annotations) == set(manifest.ids())
    n_spoof_expected = config.segments_per_long - config.bonafide_in_spoofed
    for e in manifest.entries:
        segs = annotations[e.id].annotations
        assert len(segs) == config.segments_per_long, e.id
        n_bona = sum(1 for s in segs if s.label == BONAFIDE)
        n_spoof = sum(1 for s in segs if s.label == SPOOFED)
        if e.label == SPOOFED:
            assert (n_bona, n_spoof) == (config.bonafide_in_spoofed, n_spoof_expected), e.id
        else:
            assert (n_bona, n_spoof) == (config.segments_per_long, 0), e.id
    return manifest, annotations


class TestCriterion1:
    def test_composition_fidelity(self, accept_corpus, record_property):
        record_property(
            "criterion",
            "1: exact (2580,22800)/(1000,1000)/(1000,1000) counts, 10 segments per "
            "long, 3 bonafide + 7 spoofed in spoofed longs, < 10 min",
        )
        counts = {
            "train": PlanTargets(2580, 22800),
            "dev": PlanTargets(1000, 1000),
            "eval": PlanTargets(1000, 1000),
        }
        config = GenerationConfig()
        out = tempfile.mkdtemp(prefix="longspoof_accept1_")
        try:
            t0 = time.monotonic()
            manifest_path, annotations_path = generate_dataset(
                accept_corpus / "source_manifest.jsonl",
                out,
                config,
                counts,
                seed=SEED,
                noise_manifest_path=accept_corpus / "noise_manifest.jsonl",
                jobs=1,
            )
            elapsed = time.monotonic() - t0
            manifest, _ = check_composition(manifest_path, annotations_path, counts, config)
            for e in manifest.entries:
                assert os.path.exists(os.path.join(out, e.path))
            for e in manifest.entries[:: len(manifest.entries) // 100]:
                frames, rate = wav_info(os.path.join(out, e.path))
                assert frames == e.duration and rate == 16000
            assert elapsed < 600.0, f"generation took {elapsed:.0f}s"
        finally:
            shutil.rmtree(out, ignore_errors=True)


class TestCriterion2:
    def test_snr_exact_within_millidb(self, accept_corpus, record_property):
        record_property(
            "criterion", "2: re-measured SNR within 1e-3 dB of request on 1000 random mixes"
        )
        pool = load_noise_pool(accept_corpus / "noise_manifest.jsonl")
        clips = [e.clip_id for c in pool.by_category.values() for e in c]
        rng = np.random.default_rng(SEED)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(4000, 48000))
            speech = rng.normal(0.0, 10 ** rng.uniform(-3, -0.5), n)
            clip = pool.audio(str(rng.choice(clips)))
            fitted = fit_noise_length(clip, n, int(rng.integers(0, 10**6)))
            snr_db = float(rng.uniform(-5.0, 40.0))
            alpha = snr_gain(speech, fitted, snr_db)
            measured = ref.rms_db(speech) - ref.rms_db(alpha * fitted)
            worst = max(worst, abs(measured - snr_db))
        assert worst <= 1e-3, f"worst SNR error {worst:.2e} dB"


class TestCriterion3:
    def test_normalization_hits_target(self, record_property):
        record_property(
            "criterion",
            "3: post-normalization active level within 0.5 dB of target on 1000 utterances",
        )
        rng = np.random.default_rng(SEED + 1)
        cfg = SynthConfig(speakers=8, dur_min_s=1.0, dur_max_s=3.0)
        worst = 0.0
        for i in range(1000):
            label = BONAFIDE if i % 2 == 0 else SPOOFED
            clip = make_source_clip(rng, cfg, i % 8, label)
            target = float(rng.uniform(-33.0, -23.0))
            normalized, _report = normalize_loudness(clip, target)
            worst = max(worst, abs(active_speech_level(normalized) - target))
        assert worst <= 0.5, f"worst level error {worst:.3f} dB"


def random_tiling(rng, max_segments=8):
    cursor = 0
    anns = []
    for _ in range(int(rng.integers(1, max_segments + 1))):
        n = int(rng.integers(800, 40000))
        label = SPOOFED if rng.random() < 0.5 else BONAFIDE
        anns.append(SegmentAnnotation(cursor, cursor + n, label, "src"))
        cursor += n
    return anns, cursor


class TestCriterion4:
    def test_window_labels_match_oracle(self, record_property):
        from longspoof.resegment import window_label

        record_property(
            "criterion", "4: window labels equal sample-level oracle on 10000 random cases"
        )
        rng = np.random.default_rng(SEED + 2)
        mismatches = 0
        for _ in range(10_000):
            anns, duration = random_tiling(rng)
            start = int(rng.integers(0, duration))
            end = int(rng.integers(start + 1, duration + 1))
            if window_label(anns, start, end) != ref.naive_window_label(anns, start, end):
                mismatches += 1
        assert mismatches == 0


class TestCriterion5:
    def test_a_perfect_oracle_zeroes_detection(self, accept_corpus, tmp_path, record_property):
        record_property("criterion", "5a: oracle scorer sigma=0 gives EER 0.00% and HTER 0.00%")
        out = tmp_path / "ds"
        manifest_path, _ = generate_dataset(
            accept_corpus / "source_manifest.jsonl",
            str(out),
            GenerationConfig(),
            {"dev": PlanTargets(2, 2), "eval": PlanTargets(2, 2)},
            seed=SEED,
            noise_manifest_path=accept_corpus / "noise_manifest.jsonl",
        )
        window_path = resegment_dataset(manifest_path, str(tmp_path / "win"), 4.0)
        for path in (manifest_path, window_path):
            manifest = read_manifest(path)
            ev = filter_partition(manifest, "eval")
            dv = filter_partition(manifest, "dev")
            rng = np.random.default_rng(0)
            report = evaluate_detection(
                oracle_scorer(ev, 0.0, rng), ev, oracle_scorer(dv, 0.0, rng), dv
            )
            assert report.eer == 0.0
            assert report.hter == 0.0

    def test_b_shuffled_labels_are_chance(self, record_property):
        record_property("criterion", "5b: shuffled labels, n=10^4 per class, EER 50% +/- 1.5%")
        rng = np.random.default_rng(SEED + 3)
        scores = rng.normal(0.0, 1.0, 20_000)
        labels = np.array([True] * 10_000 + [False] * 10_000)
        rng.shuffle(labels)
        assert abs(eer(scores, labels)[0] - 50.0) <= 1.5

    def test_c_monotone_transform_invariance(self, record_property):
        record_property("criterion", "5c: EER exactly invariant under strictly monotone transforms")
        rng = np.random.default_rng(SEED + 4)
        transforms = (
            lambda x: 3.0 * x - 7.0,
            np.exp,
            np.arctan,
            lambda x: x**3,
        )
        for _ in range(20):
            n_b, n_s = int(rng.integers(5, 400)), int(rng.integers(5, 400))
            scores = np.concatenate([rng.normal(0.6, 1, n_b), rng.normal(0, 1, n_s)])
            labels = np.array([True] * n_b + [False] * n_s)
            base = eer(scores, labels)[0]
            for f in transforms:
                assert eer(f(scores), labels)[0] == base

    @staticmethod
    def random_instance(rng, max_events=20):
        proposals, gts = {}, {}
        for r in range(int(rng.integers(1, 5))):
            rid = f"rec{r}"
            n = int(rng.integers(30, 200))

            def runs(p):
                mask = rng.random(n) < p
                idx = np.flatnonzero(mask)
                if idx.size == 0:
                    return []
                splits = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
                return [(int(s[0]), int(s[-1]) + 1) for s in splits][:max_events]

            gts[rid] = [LocalizationEvent(s, e) for s, e in runs(0.25)]
            proposals[rid] = [
                LocalizationEvent(s, e, confidence=round(float(rng.uniform(0, 1)), 2))
                for s, e in runs(0.3)
            ]
        return proposals, gts

    def test_d_ap_ar_equal_brute_force(self, record_property):
        record_property(
            "criterion", "5d: AP/AR exactly equal brute-force reference on 200 random instances"
        )
        for case in range(200):
            rng = np.random.default_rng(SEED + 100 + case)
            proposals, gts = self.random_instance(rng)
            for tau in AP_TAUS:
                assert ap_at(proposals, gts, tau) == ref.naive_ap(proposals, gts, tau)
            for cap in AR_CAPS:
                assert ar_at(proposals, gts, cap) == ref.naive_ar(proposals, gts, cap)

    def test_e_perfect_proposals_saturate(self, record_property):
        record_property(
            "criterion", "5e: proposals == ground truth gives AP@0.25 = 100 and AR@cap = 100"
        )
        for case in range(20):
            rng = np.random.default_rng(SEED + 500 + case)
            _, gts = self.random_instance(rng, max_events=8)
            if not any(gts.values()):
                continue
            proposals = {
                rid: [LocalizationEvent(g.start, g.end, confidence=1.0) for g in evs]
                for rid, evs in gts.items()
            }
            assert ap_at(proposals, gts, 0.25) == 100.0
            for tau in AP_TAUS:
                assert ap_at(proposals, gts, tau) == 100.0
            for cap in AR_CAPS:
                assert ar_at(proposals, gts, cap) == 100.0


def tree_digest(root):
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(filenames):
            full = os.path.join(dirpath, name)
            h.update(os.path.relpath(full, root).encode())
            h.update(open(full, "rb").read())
    return h.hexdigest()


class TestCriterion6:
    def test_determinism_across_runs_and_threads(self, accept_corpus, tmp_path, record_property):
        record_property(
            "criterion", "6: same seed gives byte-identical datasets; 1 vs 8 threads identical"
        )
        counts = {"train": PlanTargets(2, 3), "dev": PlanTargets(2, 2), "eval": PlanTargets(2, 2)}
        digests = []
        for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / name
            generate_dataset(
                accept_corpus / "source_manifest.jsonl",
                str(out),
                GenerationConfig(),
                counts,
                seed=777,
                noise_manifest_path=accept_corpus / "noise_manifest.jsonl",
                jobs=jobs,
            )
            digests.append(tree_digest(out))
        assert digests[0] == digests[1], "same seed, same jobs: bytes differ"
        assert digests[0] == digests[2], "1-thread vs 8-thread: bytes differ"


def oracle_window_labels(annotations, starts_ends):
    """Sample-level label oracle, mask hoisted per record for speed."""
    duration = max(a.end for a in annotations)
    mask = np.zeros(duration, dtype=bool)
    for a in annotations:
        if a.label == SPOOFED:
            mask[a.start : a.end] = True
    return [SPOOFED if mask[s:e].any() else BONAFIDE for s, e in starts_ends]


def check_window_labels(manifest_path, out_dir, n_seconds, annotations):
    window_path = resegment_dataset(manifest_path, out_dir, n_seconds)
    windows = read_manifest(window_path)
    win = window_samples(n_seconds)
    by_parent = {}
    for w in windows.entries:
        assert w.end - w.start == win and w.start % win == 0
        by_parent.setdefault(w.parent_id, []).append(w)
    total = 0
    for pid, group in by_parent.items():
        group.sort(key=lambda w: w.start)
        want = oracle_window_labels(
            annotations[pid].annotations, [(w.start, w.end) for w in group]
        )
        assert [w.label for w in group] == want, pid
        duration = annotations[pid].annotations[-1].end
        assert len(group) == duration // win, pid
        total += len(group)
    assert total == len(windows.entries)


class TestCriterion7:
    """Ablation plumbing: each ablation dataset re-passes the criterion 1-4 checks
    (counts/structure; SNR range + exactness; loudness; window labels)."""

    def replay_plans(self, corpus, config, targets, seed, pool=None):
        """Re-derive the plans generate_dataset used for an eval-only build."""
        source = read_manifest(corpus / "source_manifest.jsonl")
        entries = [e for e in source.entries if e.partition == "eval"]
        streams = derive_rng_streams(seed)
        plans = plan_dataset(entries, targets, config, pool, streams, id_prefix="eval_long_")
        store = SourceStore(source.entries, root=str(corpus), config=config)
        return plans, store

    def check_segments(self, plans, store, pool, out_dir, manifest, config):
        """Per rendered segment: loudness within 0.5 dB of the planned target,
        SNR within the configured range and exact by re-measurement, and the
        written audio byte-equal to an independent re-render."""
        audio = {e.id: load_wav(os.path.join(out_dir, e.path)).samples for e in manifest.entries}
        for plan in plans:
            cursor = 0
            for i, sid in enumerate(plan.segment_ids):
                samples, level = store.prepared(sid)
                target = plan.target_db[i]
                seg = render_segment(samples, level, target, plan.noise[i], pool)
                normalized = samples * 10.0 ** ((target - level) / 20.0)
                assert abs(active_speech_level(AudioBuffer(normalized)) - target) <= 0.5
                assignment = plan.noise[i]
                if not assignment.is_none:
                    assert config.noise.snr_min_db <= assignment.snr_db <= config.noise.snr_max_db
                    fitted = fit_noise_length(
                        pool.audio(assignment.clip_id), len(normalized), assignment.offset
                    )
                    alpha = snr_gain(normalized, fitted, assignment.snr_db)
                    measured = ref.rms_db(normalized) - ref.rms_db(alpha * fitted)
                    assert abs(measured - assignment.snr_db) <= 1e-3
                stored = audio[plan.longform_id][cursor : cursor + len(seg)]
                assert np.array_equal(stored, quantize_int16(seg) / 32768.0)
                cursor += len(seg)

    def generate_eval(self, corpus, tmp_path, name, config, targets, seed, with_pool):
        out = tmp_path / name
        manifest_path, annotations_path = generate_dataset(
            corpus / "source_manifest.jsonl",
            str(out),
            config,
            {"eval": targets},
            seed=seed,
            noise_manifest_path=(corpus / "noise_manifest.jsonl") if with_pool else None,
        )
        counts = {"eval": targets}
        manifest, annotations = check_composition(manifest_path, annotations_path, counts, config)
        return out, manifest_path, manifest, annotations

    def test_a_noise_off(self, accept_corpus, tmp_path, record_property):
        record_property("criterion", "7a: --noise off dataset passes criteria 1-4 checks")
        config = GenerationConfig()
        config.noise.weight_none = 1.0
        config.noise.weight_babble = 0.0
        config.noise.weight_music = 0.0
        config.noise.weight_noise = 0.0
        targets = PlanTargets(3, 7)
        out, manifest_path, manifest, annotations = self.generate_eval(
            accept_corpus, tmp_path, "off", config, targets, SEED + 7, with_pool=False
        )
        assert all(
            seg.noise.is_none for ann in annotations.values() for seg in ann.annotations
        )
        plans, store = self.replay_plans(accept_corpus, config, targets, SEED + 7)
        self.check_segments(plans, store, None, out, manifest, config)
        check_window_labels(manifest_path, str(tmp_path / "off_win"), 4.0, annotations)

    def test_b_snr_sweep(self, accept_corpus, tmp_path, record_property):
        record_property(
            "criterion", "7b: SNR sweep configs over 0-30 dB pass criteria 1-4 checks"
        )
        pool = load_noise_pool(accept_corpus / "noise_manifest.jsonl")
        targets = PlanTargets(2, 3)
        for lo, hi in ((0.0, 10.0), (10.0, 20.0), (20.0, 30.0), (0.0, 30.0)):
            config = GenerationConfig()
            config.noise.weight_none = 0.0  # every segment gets noise
            config.noise.snr_min_db = lo
            config.noise.snr_max_db = hi
            name = f"snr{int(lo)}_{int(hi)}"
            out, manifest_path, manifest, annotations = self.generate_eval(
                accept_corpus, tmp_path, name, config, targets, SEED + 8, with_pool=True
            )
            drawn = [
                seg.noise.snr_db for ann in annotations.values() for seg in ann.annotations
            ]
            assert drawn and all(lo <= s <= hi for s in drawn)
            plans, store = self.replay_plans(accept_corpus, config, targets, SEED + 8, pool)
            self.check_segments(plans, store, pool, out, manifest, config)
            check_window_labels(manifest_path, str(tmp_path / (name + "_win")), 4.0, annotations)

    def test_c_window_sweep(self, accept_corpus, tmp_path, record_property):
        record_property(
            "criterion", "7c: N sweep {0.01,0.1,0.5,1,2,4} windows pass the label checks"
        )
        config = GenerationConfig()
        config.noise.weight_none = 1.0
        config.noise.weight_babble = 0.0
        config.noise.weight_music = 0.0
        config.noise.weight_noise = 0.0
        _, manifest_path, _, annotations = self.generate_eval(
            accept_corpus, tmp_path, "nsweep", config, PlanTargets(2, 3), SEED + 9, with_pool=False
        )
        for n_seconds in (0.01, 0.1, 0.5, 1.0, 2.0, 4.0):
            check_window_labels(
                manifest_path, str(tmp_path / f"win{n_seconds}"), n_seconds, annotations
            )

    def test_d_single_speaker(self, accept_corpus, tmp_path, record_property):
        record_property(
            "criterion", "7d: --mode single passes checks with one speaker per record"
        )
        config = GenerationConfig()
        config.mode = "single"
        config.noise.weight_none = 1.0
        config.noise.weight_babble = 0.0
        config.noise.weight_music = 0.0
        config.noise.weight_noise = 0.0
        _, manifest_path, manifest, annotations = self.generate_eval(
            accept_corpus, tmp_path, "single", config, PlanTargets(2, 3), SEED + 10, with_pool=False
        )
        source = read_manifest(accept_corpus / "source_manifest.jsonl")
        speaker_of = {e.id: e.speaker_id for e in source.entries}
        for e in manifest.entries:
            assert e.speaker_id
            speakers = {speaker_of[seg.source_id] for seg in annotations[e.id].annotations}
            assert speakers == {e.speaker_id}, e.id
        check_window_labels(manifest_path, str(tmp_path / "single_win"), 4.0, annotations)
