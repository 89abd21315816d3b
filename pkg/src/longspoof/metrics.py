"""Detection and localization metrics.

Detection: DET sweep over score thresholds, EER at the interpolated
FAR/FRR crossing, HTER at a fixed (dev-derived) threshold.

Localization: annotations and window scores are rasterized onto a fixed
chunk grid (0.04 s default); spoof proposals are maximal sub-threshold
runs; AP/AR follow the temporal-localization conventions (greedy IoU
matching, all-point interpolated precision, IoU grid 0.5:0.05:0.95 for
AR).  Precision/recall accumulation uses exact rational arithmetic so
results are reproducible to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from longspoof.audio_io import PIPELINE_RATE
from longspoof.compose import BONAFIDE, SPOOFED
from longspoof.protocol import LongAnnotation, Manifest
from longspoof.scoring import TrialScore, UnknownTrial, check_trials

RESOLUTION_S = 0.04
AP_TAUS = (0.25, 0.5, 0.75, 0.95)
AR_CAPS = (100, 50, 20, 10)
AR_TAU_GRID = tuple(i / 20 for i in range(10, 20))  # 0.50, 0.55, ..., 0.95


class OneClassOnly(Exception):
    """Metric needs both bonafide and spoofed trials."""


class ConfigHashMismatch(Exception):
    """Dev and eval artifacts come from different generation configs."""


def _bona_mask(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype.kind == "b":
        return arr
    return arr == BONAFIDE


@dataclass
class DetCurve:
    """FAR/FRR at every distinct score threshold (accept iff score >= threshold)."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray


def det_curve(scores, labels) -> DetCurve:
    scores = np.asarray(scores, dtype=np.float64)
    bona = _bona_mask(labels)
    b = np.sort(scores[bona])
    s = np.sort(scores[~bona])
    if len(b) == 0 or len(s) == 0:
        raise OneClassOnly("need at least one bonafide and one spoofed trial")
    thr = np.unique(scores)
    thr = np.append(thr, thr[-1] + 1.0)  # reject-everything endpoint
    far = (len(s) - np.searchsorted(s, thr, side="left")) / len(s)
    frr = np.searchsorted(b, thr, side="left") / len(b)
    return DetCurve(thresholds=thr, far=far, frr=frr)


def eer(scores, labels) -> tuple[float, float]:
    """EER percent and its threshold, interpolated at the FAR/FRR crossing.

    The crossing position depends only on the score ordering, so any
    strictly monotone transform of the scores leaves the EER unchanged.
    """
    curve = det_curve(scores, labels)
    diff = curve.far - curve.frr  # nonincreasing, starts at 1, ends at -1
    idx = int(np.argmax(diff <= 0.0))
    if diff[idx] == 0.0:
        return float(curve.far[idx] * 100.0), float(curve.thresholds[idx])
    i1, i2 = idx - 1, idx
    t = diff[i1] / (diff[i1] - diff[i2])
    eer_frac = curve.far[i1] + t * (curve.far[i2] - curve.far[i1])
    theta = curve.thresholds[i1] + t * (curve.thresholds[i2] - curve.thresholds[i1])
    return float(eer_frac * 100.0), float(theta)


def far_frr(scores, labels, threshold: float) -> tuple[float, float]:
    scores = np.asarray(scores, dtype=np.float64)
    bona = _bona_mask(labels)
    n_b = int(bona.sum())
    n_s = int((~bona).sum())
    if n_b == 0 or n_s == 0:
        raise OneClassOnly("need at least one bonafide and one spoofed trial")
    far = float(np.count_nonzero(scores[~bona] >= threshold)) / n_s
    frr = float(np.count_nonzero(scores[bona] < threshold)) / n_b
    return far, frr


def hter(scores, labels, threshold: float) -> float:
    far, frr = far_frr(scores, labels, threshold)
    return (far + frr) / 2.0 * 100.0


@dataclass
class DetectionReport:
    eer: float  # percent, from the evaluation scores
    eer_threshold: float
    hter: float  # percent, at operating_threshold
    operating_threshold: float  # dev-set EER threshold
    n_bonafide: int
    n_spoofed: int

    def to_dict(self) -> dict:
        return {
            "eer_percent": self.eer,
            "eer_threshold": self.eer_threshold,
            "hter_percent": self.hter,
            "operating_threshold": self.operating_threshold,
            "n_bonafide": self.n_bonafide,
            "n_spoofed": self.n_spoofed,
        }


def _check_config_hashes(a: dict, b: dict) -> None:
    ha, hb = a.get("config_hash"), b.get("config_hash")
    if ha and hb and ha != hb:
        raise ConfigHashMismatch(f"dev config {hb!r} does not match eval config {ha!r}")


def evaluate_detection(
    eval_scores: list[TrialScore],
    eval_manifest: Manifest,
    dev_scores: list[TrialScore],
    dev_manifest: Manifest,
) -> DetectionReport:
    """EER on eval; operating threshold from dev EER; HTER on eval at that threshold."""
    check_trials(eval_scores, eval_manifest)
    check_trials(dev_scores, dev_manifest)
    _check_config_hashes(eval_manifest.metadata, dev_manifest.metadata)

    def arrays(scores, manifest):
        labels_by_id = manifest.labels_by_id()
        vals = np.array([s.score for s in scores])
        labs = [labels_by_id[s.trial_id] for s in scores]
        return vals, labs

    ev_vals, ev_labs = arrays(eval_scores, eval_manifest)
    dv_vals, dv_labs = arrays(dev_scores, dev_manifest)
    eval_eer, eval_thr = eer(ev_vals, ev_labs)
    _dev_eer, dev_thr = eer(dv_vals, dv_labs)
    bona = _bona_mask(ev_labs)
    return DetectionReport(
        eer=eval_eer,
        eer_threshold=eval_thr,
        hter=hter(ev_vals, ev_labs, dev_thr),
        operating_threshold=dev_thr,
        n_bonafide=int(bona.sum()),
        n_spoofed=int((~bona).sum()),
    )


# ---------------------------------------------------------------------------
# Localization on the chunk grid.


def chunk_samples(resolution_s: float = RESOLUTION_S, sample_rate: int = PIPELINE_RATE) -> int:
    res = round(resolution_s * sample_rate)
    if res < 1:
        raise ValueError("resolution is shorter than one sample")
    return res


@dataclass(frozen=True)
class LocalizationEvent:
    """A contiguous run of chunks; bounds are chunk indices, not seconds."""

    start: int
    end: int  # exclusive
    confidence: float | None = None  # predictions only
    resolution_s: float = RESOLUTION_S

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty event [{self.start}, {self.end})")

    @property
    def start_s(self) -> float:
        return self.start * self.resolution_s

    @property
    def end_s(self) -> float:
        return self.end * self.resolution_s

    @property
    def length(self) -> int:
        return self.end - self.start


def iou(a: LocalizationEvent, b: LocalizationEvent) -> float:
    """Intersection over union in whole chunks; integer arithmetic, then one division."""
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = a.length + b.length - inter
    return inter / union


def rasterize_labels(
    annotations, duration: int, resolution_s: float = RESOLUTION_S
) -> np.ndarray:
    """Boolean spoof mask over floor(duration/resolution) chunks.

    A chunk is spoofed iff it overlaps a spoofed annotation by at least
    one sample; a region ending exactly on a chunk boundary does not
    taint the next chunk.
    """
    res = chunk_samples(resolution_s)
    n = duration // res
    mask = np.zeros(n, dtype=bool)
    for ann in annotations:
        if ann.label != SPOOFED:
            continue
        k0 = ann.start // res
        k1 = min(n, -(-ann.end // res))
        if k0 < k1:
            mask[k0:k1] = True
    return mask


def rasterize_scores(
    windows: list[tuple[int, int, float]], duration: int, resolution_s: float = RESOLUTION_S
) -> np.ndarray:
    """Chunk scores from window scores: each chunk takes the score of the
    window covering its midpoint; chunks no window covers are NaN."""
    res = chunk_samples(resolution_s)
    n = duration // res
    out = np.full(n, np.nan)
    if not windows or n == 0:
        return out
    ordered = sorted(windows)
    starts = np.array([w[0] for w in ordered], dtype=np.float64)
    ends = np.array([w[1] for w in ordered], dtype=np.float64)
    vals = np.array([w[2] for w in ordered], dtype=np.float64)
    mids = (np.arange(n, dtype=np.float64) + 0.5) * res
    idx = np.searchsorted(starts, mids, side="right") - 1
    valid = (idx >= 0) & (mids < ends[np.clip(idx, 0, len(ends) - 1)])
    out[valid] = vals[idx[valid]]
    return out


def events_from_labels(mask: np.ndarray, resolution_s: float = RESOLUTION_S):
    """Ground-truth events: maximal runs of spoofed chunks."""
    idx = np.flatnonzero(mask)
    events = []
    for run in _runs(idx):
        events.append(
            LocalizationEvent(start=int(run[0]), end=int(run[-1]) + 1, resolution_s=resolution_s)
        )
    return events


def _runs(idx: np.ndarray) -> list[np.ndarray]:
    if idx.size == 0:
        return []
    return np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)


def extract_proposals(
    chunk_scores: np.ndarray, binarize_threshold: float, resolution_s: float = RESOLUTION_S
):
    """Spoof proposals: maximal runs of chunks scored below the threshold.

    NaN chunks (not covered by any window) never extend a run.  Confidence
    is the mean of (1 - score) over the run; output is sorted by
    confidence descending, start ascending on ties.
    """
    scores = np.asarray(chunk_scores, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        below = scores < binarize_threshold  # NaN compares False
    events = []
    for run in _runs(np.flatnonzero(below)):
        conf = float(np.mean(1.0 - scores[run]))
        events.append(
            LocalizationEvent(
                start=int(run[0]),
                end=int(run[-1]) + 1,
                confidence=conf,
                resolution_s=resolution_s,
            )
        )
    events.sort(key=lambda e: (-e.confidence, e.start))
    return events


def _greedy_match(proposals, gts, tau: float) -> list[bool]:
    """True-positive flags for proposals (already ranked); each GT matches once.

    The qualifying ground-truth event with the highest IoU wins; ties go
    to the earliest event.
    """
    gts = sorted(gts, key=lambda g: g.start)
    taken = [False] * len(gts)
    flags = []
    for p in proposals:
        best, best_iou = -1, 0.0
        for gi, g in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(p, g)
            if v >= tau and v > best_iou:
                best, best_iou = gi, v
        if best >= 0:
            taken[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _ranked(proposals_by_record) -> list[tuple[str, LocalizationEvent]]:
    flat = [(rid, ev) for rid, evs in proposals_by_record.items() for ev in evs]
    for rid, ev in flat:
        if ev.confidence is None:
            raise ValueError(f"proposal in record {rid!r} has no confidence")
    flat.sort(key=lambda it: (-it[1].confidence, it[0], it[1].start))
    return flat


def ap_at(proposals_by_record: dict, gt_by_record: dict, tau: float) -> float:
    """Average precision (percent) at one IoU threshold, ranked dataset-globally.

    With no ground-truth events recall is undefined; this returns 0.0 by
    convention.  Matching is greedy in rank order and restricted to the
    proposal's own record.
    """
    n_gt = sum(len(v) for v in gt_by_record.values())
    if n_gt == 0:
        return 0.0
    ranked = _ranked(proposals_by_record)
    taken: dict[str, list[bool]] = {}
    gts_sorted = {rid: sorted(evs, key=lambda g: g.start) for rid, evs in gt_by_record.items()}
    flags = []
    for rid, p in ranked:
        gts = gts_sorted.get(rid, [])
        state = taken.setdefault(rid, [False] * len(gts))
        best, best_iou = -1, 0.0
        for gi, g in enumerate(gts):
            if state[gi]:
                continue
            v = iou(p, g)
            if v >= tau and v > best_iou:
                best, best_iou = gi, v
        if best >= 0:
            state[best] = True
            flags.append(True)
        else:
            flags.append(False)

    # All-point interpolated PR area, in exact rationals.
    mpre = [Fraction(0)]
    mrec = [Fraction(0)]
    tp_cum = 0
    for k, tp in enumerate(flags):
        tp_cum += int(tp)
        mpre.append(Fraction(tp_cum, k + 1))
        mrec.append(Fraction(tp_cum, n_gt))
    mpre.append(Fraction(0))
    mrec.append(mrec[-1])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    area = Fraction(0)
    for i in range(len(mrec) - 1):
        area += (mrec[i + 1] - mrec[i]) * mpre[i + 1]
    return float(area * 100)


def ar_at(proposals_by_record: dict, gt_by_record: dict, cap: int) -> float:
    """Average recall (percent) with at most `cap` proposals per record.

    Recall is averaged over the IoU grid 0.5:0.05:0.95, then over records
    that contain at least one ground-truth event.
    """
    recs = sorted(rid for rid, evs in gt_by_record.items() if evs)
    if not recs:
        return 0.0
    total = Fraction(0)
    for rid in recs:
        props = sorted(
            proposals_by_record.get(rid, []), key=lambda e: (-e.confidence, e.start)
        )[:cap]
        gts = gt_by_record[rid]
        acc = Fraction(0)
        for tau in AR_TAU_GRID:
            acc += Fraction(sum(_greedy_match(props, gts, tau)), len(gts))
        total += acc / len(AR_TAU_GRID)
    return float(total / len(recs) * 100)


@dataclass
class ApArReport:
    ap: dict[float, float] = field(default_factory=dict)  # tau -> percent
    ar: dict[int, float] = field(default_factory=dict)  # cap -> percent
    binarize_threshold: float = 0.0
    resolution_s: float = RESOLUTION_S

    def to_dict(self) -> dict:
        return {
            "ap_percent": {f"{tau:g}": v for tau, v in self.ap.items()},
            "ar_percent": {str(cap): v for cap, v in self.ar.items()},
            "binarize_threshold": self.binarize_threshold,
            "resolution_s": self.resolution_s,
        }


def localization_sets(
    window_manifest: Manifest,
    scores: list[TrialScore],
    annotations: dict[str, LongAnnotation],
    binarize_threshold: float,
    resolution_s: float = RESOLUTION_S,
) -> tuple[dict, dict]:
    """Per-record proposal and ground-truth event sets from window scores."""
    score_by_id = {s.trial_id: s.score for s in scores}
    windows_by_parent: dict[str, list[tuple[int, int, float]]] = {}
    for e in window_manifest.entries:
        windows_by_parent.setdefault(e.parent_id, []).append(
            (e.start, e.end, score_by_id[e.id])
        )
    proposals: dict[str, list[LocalizationEvent]] = {}
    gts: dict[str, list[LocalizationEvent]] = {}
    for pid, wins in windows_by_parent.items():
        ann = annotations.get(pid)
        if ann is None:
            raise UnknownTrial(f"window parent {pid!r} not present in the annotation file")
        duration = ann.annotations[-1].end
        gts[pid] = events_from_labels(
            rasterize_labels(ann.annotations, duration, resolution_s), resolution_s
        )
        grid = rasterize_scores(wins, duration, resolution_s)
        proposals[pid] = extract_proposals(grid, binarize_threshold, resolution_s)
    return proposals, gts


def evaluate_localization(
    eval_scores: list[TrialScore],
    eval_manifest: Manifest,
    dev_scores: list[TrialScore],
    dev_manifest: Manifest,
    annotations: dict[str, LongAnnotation] | None = None,
    with_ap_ar: bool = False,
    resolution_s: float = RESOLUTION_S,
    binarize_threshold: float | None = None,
) -> tuple[DetectionReport, ApArReport | None]:
    """Window-level detection report, plus AP/AR when annotations are supplied.

    The binarization threshold for proposals defaults to the dev-set EER
    threshold, keeping the protocol self-contained.
    """
    report = evaluate_detection(eval_scores, eval_manifest, dev_scores, dev_manifest)
    if not with_ap_ar:
        return report, None
    if annotations is None:
        raise ValueError("AP/AR needs the long-form annotation file")
    theta = report.operating_threshold if binarize_threshold is None else binarize_threshold
    proposals, gts = localization_sets(
        eval_manifest, eval_scores, annotations, theta, resolution_s
    )
    ap_ar = ApArReport(binarize_threshold=theta, resolution_s=resolution_s)
    for tau in AP_TAUS:
        ap_ar.ap[tau] = ap_at(proposals, gts, tau)
    for cap in AR_CAPS:
        ap_ar.ar[cap] = ar_at(proposals, gts, cap)
    return report, ap_ar
