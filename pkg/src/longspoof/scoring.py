"""Score-file ingestion and synthetic scorers.

Score files are the model boundary: any detector that writes
"trial_id<TAB>score" lines can be evaluated.  Polarity is fixed package
wide: higher score means more bonafide.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from longspoof.compose import BONAFIDE
from longspoof.protocol import Manifest, ParseError


class DuplicateTrial(Exception):
    pass


class MissingTrial(Exception):
    """A manifest trial has no score."""


class UnknownTrial(Exception):
    """A scored trial is not in the manifest."""


@dataclass(frozen=True)
class TrialScore:
    trial_id: str
    score: float


def read_scores(path) -> list[TrialScore]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    out: list[TrialScore] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'trial_id<TAB>score'")
        trial_id, raw = parts
        try:
            score = float(raw)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric score {raw!r}") from exc
        if not math.isfinite(score):
            raise ParseError(f"{path}:{lineno}: non-finite score {raw!r}")
        if trial_id in seen:
            raise DuplicateTrial(f"{path}:{lineno}: duplicate trial {trial_id!r}")
        seen.add(trial_id)
        out.append(TrialScore(trial_id, score))
    return out


def write_scores(scores: list[TrialScore], path) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for s in scores:
                fh.write(f"{s.trial_id}\t{s.score!r}\n")
        os.replace(tmp, path)
    except OSError:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def check_trials(scores: list[TrialScore], manifest: Manifest) -> None:
    """Require a bijection between scored trial ids and manifest ids."""
    scored = {s.trial_id for s in scores}
    expected = set(manifest.ids())
    unknown = scored - expected
    if unknown:
        raise UnknownTrial(f"scored trial {sorted(unknown)[0]!r} not in manifest")
    missing = expected - scored
    if missing:
        raise MissingTrial(f"manifest trial {sorted(missing)[0]!r} has no score")


def oracle_scorer(
    manifest: Manifest, sigma: float, rng: np.random.Generator
) -> list[TrialScore]:
    """Label plus Gaussian noise; sigma=0 separates the classes perfectly."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    out = []
    for e in manifest.entries:
        base = 1.0 if e.label == BONAFIDE else 0.0
        out.append(TrialScore(e.id, base + sigma * float(rng.standard_normal())))
    return out


def constant_scorer(manifest: Manifest, value: float = 0.5) -> list[TrialScore]:
    return [TrialScore(e.id, value) for e in manifest.entries]


def random_scorer(manifest: Manifest, rng: np.random.Generator) -> list[TrialScore]:
    return [TrialScore(e.id, float(rng.standard_normal())) for e in manifest.entries]
