"""Window extraction, normalization, threshold calibration, and anomaly
detection over gaze sequences, plus the LLM-ready summary payload."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .canonical import canonical_json
from .errors import ValidationError
from .gaze_data import Session
from .lstm import reconstruction_error
from .segmentation import PromptBundle, TemplateSet, build_bundle

logger = logging.getLogger(__name__)

FEATURE_NAMES = ("fixation_duration_ms", "saccade_duration_ms", "gaze_x", "gaze_y")
DEFAULT_WINDOW_LEN = 16
DEFAULT_STRIDE = 8
DEFAULT_THRESHOLD_K = 3.0


class ZeroVarianceError(ValidationError):
    """A feature is constant over the training windows; z-scoring is undefined."""


@dataclass
class Window:
    participant_id: str
    question_id: str
    start: int
    features: np.ndarray  # (window_len, feature_dim)
    aoi_majority: str     # Error | NonError


def build_windows(
    sessions: dict[tuple, Session], window_len: int = DEFAULT_WINDOW_LEN,
    stride: int = DEFAULT_STRIDE,
) -> list[Window]:
    """Slide a fixed window over every session, in sorted session order.

    Sessions shorter than the window yield nothing (logged). The majority
    AOI of the member records labels the window; ties resolve to Error so
    borderline windows land in the problem-area bin.
    """
    if window_len < 2:
        raise ValidationError("window_len must be >= 2")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    windows: list[Window] = []
    for key in sorted(sessions):
        session = sessions[key]
        length = session.features.shape[0]
        if length < window_len:
            logger.warning(
                "session %s/%s has %d records, shorter than window %d; skipped",
                session.participant_id, session.question_id, length, window_len,
            )
            continue
        for start in range(0, length - window_len + 1, stride):
            cats = [
                c for c in session.aoi_categories[start : start + window_len] if c is not None
            ]
            counts = Counter(cats)
            if not counts:
                majority = "NonError"
            else:
                top = max(counts.values())
                majority = "Error" if counts.get("Error", 0) == top else counts.most_common(1)[0][0]
            windows.append(
                Window(
                    participant_id=session.participant_id,
                    question_id=session.question_id,
                    start=start,
                    features=session.features[start : start + window_len].astype(np.float64).copy(),
                    aoi_majority=majority,
                )
            )
    return windows


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, window: Window) -> Window:
        return Window(
            participant_id=window.participant_id,
            question_id=window.question_id,
            start=window.start,
            features=(window.features - self.mean) / self.std,
            aoi_majority=window.aoi_majority,
        )

    def apply_all(self, windows: Sequence[Window]) -> list[Window]:
        return [self.apply(w) for w in windows]


def fit_normalizer(windows: Sequence[Window]) -> Normalizer:
    """Per-feature mean/std over the expert training windows only."""
    if not windows:
        raise ValidationError("cannot fit a normalizer on zero windows")
    stacked = np.concatenate([w.features for w in windows], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    for i, s in enumerate(std):
        if s == 0.0:
            name = FEATURE_NAMES[i] if i < len(FEATURE_NAMES) else f"feature_{i}"
            raise ZeroVarianceError(f"feature {name!r} has zero variance in training data")
    return Normalizer(mean=mean, std=std)


def calibrate_threshold(errors: Sequence[float], k: float = DEFAULT_THRESHOLD_K) -> float:
    """mean + k * population std of the training reconstruction errors.

    k = 0 degenerates to the mean; negative k would flag typical windows and
    is rejected.
    """
    if len(errors) < 2:
        raise ValidationError("threshold calibration needs at least two error values")
    if k < 0:
        raise ValidationError("k must be non-negative")
    arr = np.asarray(errors, dtype=np.float64)
    return float(arr.mean() + k * arr.std())


@dataclass
class WindowResult:
    participant_id: str
    question_id: str
    start: int
    aoi_majority: str
    error: float
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "question_id": self.question_id,
            "start": self.start,
            "aoi_majority": self.aoi_majority,
            "error": self.error,
            "flagged": self.flagged,
        }


@dataclass
class AnomalyReport:
    threshold: float
    results: list[WindowResult]
    participants: list[str]
    question_ids: list[str]
    counts: dict = field(default_factory=dict)   # (pid, qid, category) -> flagged count
    totals: dict = field(default_factory=dict)   # (pid, qid) -> window count
    double_zero: list = field(default_factory=list)
    band_error_rates: dict = field(default_factory=dict)  # level -> rate | None

    def flagged_count(self) -> int:
        return sum(1 for r in self.results if r.flagged)

    def count(self, pid: str, qid: str, category: str) -> int:
        return self.counts.get((pid, qid, category), 0)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "participants": self.participants,
            "question_ids": self.question_ids,
            "counts": {
                f"{pid}|{qid}|{cat}": n for (pid, qid, cat), n in sorted(self.counts.items())
            },
            "totals": {f"{pid}|{qid}": n for (pid, qid), n in sorted(self.totals.items())},
            "double_zero": list(self.double_zero),
            "band_error_rates": dict(self.band_error_rates),
            "flagged": self.flagged_count(),
            "windows": len(self.results),
        }

    @classmethod
    def from_dict(cls, data: dict, results: Optional[list[WindowResult]] = None) -> "AnomalyReport":
        counts = {}
        for key, n in data["counts"].items():
            pid, qid, cat = key.split("|")
            counts[(pid, qid, cat)] = n
        totals = {}
        for key, n in data["totals"].items():
            pid, qid = key.split("|")
            totals[(pid, qid)] = n
        return cls(
            threshold=data["threshold"],
            results=results or [],
            participants=list(data["participants"]),
            question_ids=list(data["question_ids"]),
            counts=counts,
            totals=totals,
            double_zero=list(data["double_zero"]),
            band_error_rates=dict(data["band_error_rates"]),
        )


def detect(
    model,
    threshold: float,
    windows: Sequence[Window],
    question_levels: Optional[dict[str, str]] = None,
) -> AnomalyReport:
    """Score windows against the expert model and bin anomalies.

    A window is anomalous when its reconstruction error exceeds the
    threshold. Counts are kept per (participant, question, AOI category);
    questions where every participant has zero anomalies are surfaced as
    double-zero flags (possible task-design defects). When question
    difficulty levels are supplied, flagged-rate per difficulty band is
    reported as well.
    """
    results = []
    for w in windows:
        err = reconstruction_error(model, w.features)
        results.append(
            WindowResult(
                participant_id=w.participant_id,
                question_id=w.question_id,
                start=w.start,
                aoi_majority=w.aoi_majority,
                error=err,
                flagged=err > threshold,
            )
        )

    participants = sorted({r.participant_id for r in results})
    question_ids = sorted({r.question_id for r in results})
    counts: dict = {}
    totals: dict = {}
    for r in results:
        totals[(r.participant_id, r.question_id)] = totals.get((r.participant_id, r.question_id), 0) + 1
        if r.flagged:
            key = (r.participant_id, r.question_id, r.aoi_majority)
            counts[key] = counts.get(key, 0) + 1

    double_zero = []
    for qid in question_ids:
        by_question = sum(
            n for (pid, q, cat), n in counts.items() if q == qid
        )
        if by_question == 0:
            double_zero.append(qid)

    band_rates: dict = {}
    if question_levels:
        for level in sorted(set(question_levels.values())):
            level_questions = {q for q, lv in question_levels.items() if lv == level}
            total = sum(1 for r in results if r.question_id in level_questions)
            flagged = sum(1 for r in results if r.question_id in level_questions and r.flagged)
            band_rates[level] = (flagged / total) if total else None

    return AnomalyReport(
        threshold=threshold,
        results=results,
        participants=participants,
        question_ids=question_ids,
        counts=counts,
        totals=totals,
        double_zero=double_zero,
        band_error_rates=band_rates,
    )


def summary_payload(report: AnomalyReport) -> dict:
    """Compact per-student, per-question, per-AOI anomaly counts plus
    group-level aggregates; zero cells are serialized too so the matrix
    shape is explicit."""
    students = {}
    for pid in report.participants:
        per_question = {}
        for qid in report.question_ids:
            per_question[qid] = {
                "Error": report.count(pid, qid, "Error"),
                "NonError": report.count(pid, qid, "NonError"),
            }
        students[pid] = per_question
    per_question_totals = {
        qid: sum(
            report.count(pid, qid, cat)
            for pid in report.participants
            for cat in ("Error", "NonError")
        )
        for qid in report.question_ids
    }
    return {
        "threshold": report.threshold,
        "students": students,
        "question_totals": per_question_totals,
        "double_zero": list(report.double_zero),
        "band_error_rates": dict(report.band_error_rates),
        "flagged_windows": report.flagged_count(),
        "total_windows": len(report.results),
    }


def summarize_for_llm(
    report: AnomalyReport, templates: TemplateSet, budget: int = 12_000
) -> PromptBundle:
    """Wrap the anomaly distribution in the analysis prompt that asks for
    cross-group comparison and per-student trajectory reading."""
    payload = canonical_json(summary_payload(report))
    return build_bundle([payload], "anomaly", "detailed", templates, budget=max(budget, len(payload) + 1))
