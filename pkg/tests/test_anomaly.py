import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazelab.anomaly import (
    AnomalyReport,
    Window,
    ZeroVarianceError,
    build_windows,
    calibrate_threshold,
    detect,
    fit_normalizer,
    summarize_for_llm,
    summary_payload,
)
from gazelab.errors import ValidationError
from gazelab.gaze_data import Session


def session(pid="E1", qid="A1", length=20, expertise="expert", seed=0, aois=None):
    rng = np.random.Generator(np.random.PCG64(seed))
    features = rng.normal(size=(length, 4)) * [50, 10, 0.1, 0.1] + [250, 40, 0.5, 0.5]
    return Session(
        participant_id=pid,
        question_id=qid,
        expertise=expertise,
        timestamps=list(range(length)),
        features=features,
        aoi_categories=aois or ["Error" if i % 2 == 0 else "NonError" for i in range(length)],
    )


class TestBuildWindows:
    def test_exact_division(self):
        sessions = {("E1", "A1"): session(length=10)}
        windows = build_windows(sessions, window_len=5, stride=5)
        assert len(windows) == 2
        assert [w.start for w in windows] == [0, 5]

    def test_short_sequence_skipped_with_warning(self, caplog):
        sessions = {("E1", "A1"): session(length=4)}
        with caplog.at_level(logging.WARNING):
            windows = build_windows(sessions, window_len=5, stride=1)
        assert windows == []
        assert "shorter than window" in caplog.text

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 80), st.integers(2, 12), st.integers(1, 8))
    def test_count_formula(self, length, window_len, stride):
        sessions = {("E1", "A1"): session(length=length)}
        windows = build_windows(sessions, window_len, stride)
        expected = 0 if length < window_len else (length - window_len) // stride + 1
        assert len(windows) == expected

    def test_majority_aoi(self):
        aois = ["Error"] * 3 + ["NonError"] * 2
        sessions = {("E1", "A1"): session(length=5, aois=aois)}
        (window,) = build_windows(sessions, window_len=5, stride=5)
        assert window.aoi_majority == "Error"

    def test_majority_tie_resolves_to_error(self):
        aois = ["Error", "NonError"] * 2
        sessions = {("E1", "A1"): session(length=4, aois=aois)}
        (window,) = build_windows(sessions, window_len=4, stride=4)
        assert window.aoi_majority == "Error"

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            build_windows({}, window_len=1, stride=1)
        with pytest.raises(ValidationError):
            build_windows({}, window_len=4, stride=0)


class TestNormalizer:
    def test_zero_variance_named(self):
        w = Window("E1", "A1", 0, np.ones((6, 4)), "Error")
        w.features[:, 1] = 7.0
        w2 = Window("E1", "A1", 6, np.ones((6, 4)), "Error")
        w2.features[:, 1] = 7.0
        with pytest.raises(ZeroVarianceError) as err:
            fit_normalizer([w, w2])
        assert "fixation_duration_ms" in str(err.value)

    def test_training_set_z_scored(self):
        sessions = {("E1", "A1"): session(length=64, seed=3)}
        windows = build_windows(sessions, 8, 8)
        norm = fit_normalizer(windows)
        stacked = np.concatenate([w.features for w in norm.apply_all(windows)])
        assert np.all(np.abs(stacked.mean(axis=0)) < 1e-9)
        assert np.allclose(stacked.std(axis=0), 1.0)

    def test_outliers_not_clipped(self):
        sessions = {("E1", "A1"): session(length=32, seed=4)}
        windows = build_windows(sessions, 8, 8)
        norm = fit_normalizer(windows)
        spiked = Window("S1", "B1", 0, windows[0].features.copy(), "Error")
        spiked.features[:, 0] += 50 * norm.std[0]
        z = norm.apply(spiked)
        assert np.abs(z.features[:, 0]).max() > 3.0

    def test_empty_error(self):
        with pytest.raises(ValidationError):
            fit_normalizer([])


class TestThreshold:
    def test_forced_arithmetic(self):
        assert calibrate_threshold([1.0, 2.0, 3.0], k=2.0) == pytest.approx(3.63299, abs=1e-5)

    def test_k_zero_is_mean(self):
        assert calibrate_threshold([1.0, 2.0, 3.0], k=0.0) == pytest.approx(2.0)

    def test_monotone_in_k(self):
        errors = [0.5, 1.0, 2.5, 0.7]
        values = [calibrate_threshold(errors, k) for k in (0.5, 1.0, 2.0, 3.0)]
        assert values == sorted(values)
        assert len(set(values)) == len(values)

    def test_validation(self):
        with pytest.raises(ValidationError):
            calibrate_threshold([1.0], k=1.0)
        with pytest.raises(ValidationError):
            calibrate_threshold([1.0, 2.0], k=-1.0)


class ScriptedModel:
    """Test double: reconstruction error is looked up per window start."""

    def __init__(self, errors):
        self.errors = errors

    def reconstruct(self, x):
        # produce output whose MSE from x equals the scripted error
        key = round(float(x[0, 0]), 6)
        err = self.errors[key]
        return x + np.sqrt(err)


def scripted_windows(spec):
    """spec: list of (pid, qid, aoi, err). Marks windows so ScriptedModel can
    look up the scripted error from the first feature value."""
    windows = []
    errors = {}
    for i, (pid, qid, aoi, err) in enumerate(spec):
        features = np.zeros((4, 4))
        features[0, 0] = i + 1
        errors[float(i + 1)] = err
        windows.append(Window(pid, qid, 0, features, aoi))
    return windows, ScriptedModel(errors)


class TestDetect:
    def test_no_flags_when_below_threshold(self):
        windows, model = scripted_windows(
            [("S1", "A1", "Error", 0.1), ("S2", "B1", "NonError", 0.2)]
        )
        report = detect(model, threshold=1.0, windows=windows)
        assert report.flagged_count() == 0
        assert sum(report.counts.values()) == 0
        assert report.double_zero == ["A1", "B1"]

    def test_flags_and_conservation(self):
        spec = [
            ("S1", "A1", "Error", 5.0),
            ("S1", "A1", "NonError", 0.1),
            ("S2", "B1", "Error", 7.0),
            ("S2", "B1", "Error", 6.0),
            ("S2", "C2", "NonError", 0.05),
        ]
        windows, model = scripted_windows(spec)
        report = detect(model, threshold=1.0, windows=windows)
        assert report.flagged_count() == 3
        assert sum(report.counts.values()) == report.flagged_count()
        assert report.count("S2", "B1", "Error") == 2
        assert report.count("S1", "A1", "Error") == 1

    def test_double_zero_detected(self):
        spec = [
            ("S1", "C2", "Error", 0.1),
            ("S2", "C2", "NonError", 0.1),
            ("S1", "B1", "Error", 9.0),
        ]
        windows, model = scripted_windows(spec)
        report = detect(model, threshold=1.0, windows=windows)
        assert "C2" in report.double_zero
        assert "B1" not in report.double_zero

    def test_band_error_rates(self):
        spec = [
            ("S1", "A1", "Error", 9.0),
            ("S1", "A1", "Error", 0.1),
            ("S1", "D2", "Error", 0.1),
        ]
        windows, model = scripted_windows(spec)
        report = detect(model, 1.0, windows, question_levels={"A1": "easy", "D2": "hard"})
        assert report.band_error_rates["easy"] == pytest.approx(0.5)
        assert report.band_error_rates["hard"] == 0.0


class TestSummary:
    def fixture_report(self):
        questions = [f"{letter}{d}" for letter in "ABCD" for d in (1, 2, 3)]
        spec = []
        for pid in ("S1", "S2"):
            for qid in questions:
                spec.append((pid, qid, "Error", 3.0 if qid == "B1" and pid == "S2" else 0.1))
        windows, model = scripted_windows(spec)
        return detect(model, 1.0, windows)

    def test_shape_48_cells(self):
        report = self.fixture_report()
        payload = summary_payload(report)
        cells = [
            payload["students"][pid][qid][cat]
            for pid in payload["students"]
            for qid in payload["students"][pid]
            for cat in ("Error", "NonError")
        ]
        assert len(cells) == 48  # 2 students x 12 questions x 2 categories

    def test_round_trip_counts(self, templates):
        report = self.fixture_report()
        bundle = summarize_for_llm(report, templates)
        prompt = bundle.payload_chunks[0]
        start = prompt.index('{"band_error_rates"')
        end = prompt.rindex("}") + 1
        blob = prompt[start:end]
        depth = 0
        for i, ch in enumerate(blob):
            depth += ch == "{"
            depth -= ch == "}"
            if depth == 0:
                blob = blob[: i + 1]
                break
        parsed = json.loads(blob)
        for pid in report.participants:
            for qid in report.question_ids:
                for cat in ("Error", "NonError"):
                    assert parsed["students"][pid][qid][cat] == report.count(pid, qid, cat)

    def test_empty_report_payload(self):
        report = detect(ScriptedModel({}), 1.0, [])
        payload = summary_payload(report)
        assert payload["students"] == {}
        assert payload["flagged_windows"] == 0

    def test_report_round_trip(self):
        report = self.fixture_report()
        again = AnomalyReport.from_dict(report.to_dict(), report.results)
        assert again.counts == report.counts
        assert again.double_zero == report.double_zero
        assert again.threshold == report.threshold
