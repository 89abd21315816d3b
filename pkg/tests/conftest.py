from __future__ import annotations

import numpy as np
import pytest

from longspoof.audio_io import AudioBuffer
from longspoof.compose import PlanTargets
from longspoof.config import GenerationConfig
from longspoof.dataset import generate_dataset
from longspoof.protocol import (
    Manifest,
    make_metadata,
    rng_stream,
    write_manifest,
    write_noise_pool_manifest,
)
from longspoof.synth import SynthConfig, make_synthetic_source

_acceptance_results: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    criterion = dict(report.user_properties).get("criterion", report.nodeid.split("::")[-1])
    _acceptance_results.append((report.nodeid, report.outcome, criterion))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for _nodeid, outcome, criterion in _acceptance_results:
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"[{word}] criterion {criterion}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tone(duration_s=1.0, freq=220.0, amp=0.3, fs=16000, pad_s=0.0):
    t = np.arange(int(duration_s * fs)) / fs
    x = amp * np.sin(2 * np.pi * freq * t)
    if pad_s:
        pad = np.zeros(int(pad_s * fs))
        x = np.concatenate([pad, x, pad])
    return AudioBuffer(x)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Small synthetic source corpus shared across integration tests."""
    out = tmp_path_factory.mktemp("corpus")
    cfg = SynthConfig(speakers=4, dur_min_s=2.0, dur_max_s=5.0, noise_per_category=3)
    counts = {"train": (10, 10), "dev": (6, 6), "eval": (6, 6)}
    entries, noise_entries, meta = make_synthetic_source(
        str(out), counts, cfg, rng_stream(11, "synth"), 11
    )
    write_manifest(
        Manifest(entries, make_metadata("source", 11, meta["synth_config_hash"])),
        out / "source_manifest.jsonl",
    )
    write_noise_pool_manifest(noise_entries, out / "noise_manifest.jsonl")
    return out


@pytest.fixture(scope="session")
def small_dataset(corpus_dir, tmp_path_factory):
    """Generated long-form dataset over the shared corpus (train/dev/eval)."""
    out = tmp_path_factory.mktemp("dataset")
    config = GenerationConfig()
    counts = {
        "train": PlanTargets(3, 5),
        "dev": PlanTargets(3, 3),
        "eval": PlanTargets(3, 3),
    }
    manifest_path, annotations_path = generate_dataset(
        corpus_dir / "source_manifest.jsonl",
        str(out),
        config,
        counts,
        seed=42,
        noise_manifest_path=corpus_dir / "noise_manifest.jsonl",
    )
    return {
        "dir": out,
        "manifest": manifest_path,
        "annotations": annotations_path,
        "config": config,
    }
