import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import HEADER, csv_row, make_csv, random_table
from gazelab.errors import ConfigurationError
from gazelab.gaze_data import (
    AoiDefinition,
    CleaningConfig,
    ColumnRoles,
    DefaultAoi,
    EmptyResultError,
    EmptyTableError,
    SchemaError,
    annotate_aoi,
    clean,
    emit_csv,
    parse_gaze_csv,
    sessionize,
)
from gazelab.synthetic import make_gaze_export

ROLES = ColumnRoles()


class TestParse:
    def test_three_rows(self):
        table = parse_gaze_csv(make_csv([csv_row(t=0), csv_row(t=1), csv_row(t=2)]))
        assert len(table.rows) == 3
        assert table.rows[0]["fixation_duration_ms"] == 200
        assert table.rows[0]["gaze_x"] == 0.5

    def test_missing_cell_flagged_not_zeroed(self):
        table = parse_gaze_csv(make_csv([csv_row(fix="")]))
        assert table.rows[0]["fixation_duration_ms"] is None

    def test_unparseable_cell_is_missing(self):
        table = parse_gaze_csv(make_csv([csv_row(fix="garbage")]))
        assert table.rows[0]["fixation_duration_ms"] is None

    def test_header_mismatch_names_columns(self):
        bad = HEADER.replace("gaze_x", "gx").replace("gaze_y", "gy")
        with pytest.raises(SchemaError) as err:
            parse_gaze_csv(bad + "\n" + csv_row() + "\n")
        assert "gaze_x" in str(err.value) and "gaze_y" in str(err.value)

    def test_empty_input(self):
        with pytest.raises(EmptyTableError):
            parse_gaze_csv("")
        with pytest.raises(EmptyTableError):
            parse_gaze_csv(HEADER + "\n")

    def test_tab_delimiter_autodetect(self):
        text = make_csv([csv_row()]).replace(",", "\t")
        table = parse_gaze_csv(text)
        assert table.provenance["delimiter"] == "\t"
        assert table.rows[0]["participant_id"] == "P1"

    def test_synthetic_export_matches_manifest(self):
        export = make_gaze_export(seed=11, sequence_length=6)
        table = parse_gaze_csv(export.csv_text)
        participants = {r["participant_id"] for r in table.rows}
        assert len(participants) == 19  # 10 experts + 9 students
        assert len(table.rows) == sum(export.manifest["sequence_lengths"].values())

    def test_emit_round_trip_byte_stable(self):
        export = make_gaze_export(seed=11, n_experts=1, n_students=1, sequence_length=5)
        table = parse_gaze_csv(export.csv_text)
        emitted = emit_csv(table)
        again = emit_csv(parse_gaze_csv(emitted))
        assert emitted == again


class TestClean:
    def test_missing_row_dropped_and_counted(self):
        rows = [csv_row(t=i * 10) for i in range(9)] + [csv_row(t=100, fix="")]
        table = parse_gaze_csv(make_csv(rows))
        cleaned, report = clean(table)
        assert report.rows_in == 10 and report.rows_out == 9
        assert report.dropped_missing == 1

    def test_fixation_threshold_is_noise(self):
        table = parse_gaze_csv(make_csv([csv_row(t=0, fix="5"), csv_row(t=10)]))
        cleaned, report = clean(table, CleaningConfig(min_fixation_ms=50))
        assert report.dropped_noise == 1
        assert len(cleaned.rows) == 1

    def test_irrelevant_question_dropped(self):
        table = parse_gaze_csv(make_csv([csv_row(qid="Z9", t=0), csv_row(t=10)]))
        cleaned, report = clean(table, CleaningConfig(question_ids=("A1",)))
        assert report.dropped_irrelevant == 1

    def test_duplicate_timestamp_keeps_later(self):
        table = parse_gaze_csv(make_csv([csv_row(t=5, fix="100"), csv_row(t=5, fix="300")]))
        cleaned, report = clean(table)
        assert len(cleaned.rows) == 1
        assert cleaned.rows[0]["fixation_duration_ms"] == 300
        assert report.dropped_noise == 1

    def test_idempotent(self):
        rng = np.random.Generator(np.random.PCG64(3))
        table = random_table(rng, 200)
        once, report1 = clean(table)
        twice, report2 = clean(once)
        assert [r for r in twice.rows] == [r for r in once.rows]
        assert (report2.dropped_missing, report2.dropped_noise, report2.dropped_irrelevant) == (0, 0, 0)

    def test_all_rows_dropped_raises_with_report(self):
        table = parse_gaze_csv(make_csv([csv_row(fix="1"), csv_row(t=10, fix="2")]))
        with pytest.raises(EmptyResultError) as err:
            clean(table)
        assert err.value.report.dropped_noise == 2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 120))
    def test_conservation_property(self, seed, n_rows):
        rng = np.random.Generator(np.random.PCG64(seed))
        table = random_table(rng, n_rows)
        # inject some dirt deterministically
        for i, row in enumerate(table.rows):
            if i % 7 == 3:
                row["saccade_duration_ms"] = None
            if i % 11 == 5:
                row["fixation_duration_ms"] = 3.0
        try:
            cleaned, report = clean(table)
        except EmptyResultError as err:
            report = err.report
            assert report.rows_out == 0
        assert report.balanced()
        dropped = report.dropped_missing + report.dropped_noise + report.dropped_irrelevant
        assert report.rows_in == len(table.rows)
        assert report.rows_out + dropped == report.rows_in

    def test_timestamps_strictly_increasing_after_clean(self):
        rng = np.random.Generator(np.random.PCG64(9))
        table = random_table(rng, 300)
        cleaned, _ = clean(table)
        seen = {}
        for row in cleaned.rows:
            key = (row["participant_id"], row["question_id"])
            if key in seen:
                assert row["timestamp_ms"] > seen[key]
            seen[key] = row["timestamp_ms"]


AOIS = [
    AoiDefinition("err", "A1", (0.4, 0.4, 0.6, 0.6), "Error"),
    AoiDefinition("stem", "A1", (0.6, 0.4, 0.9, 0.6), "NonError"),
]


class TestAnnotate:
    def test_point_inside_error_region(self):
        table = parse_gaze_csv(make_csv([csv_row(x="0.5", y="0.5")]))
        out = annotate_aoi(table, AOIS)
        assert out.rows[0]["aoi"] == "err"
        assert out.rows[0]["aoi_category"] == "Error"

    def test_shared_edge_first_declared_wins(self):
        table = parse_gaze_csv(make_csv([csv_row(x="0.6", y="0.5")]))
        out = annotate_aoi(table, AOIS)
        assert out.rows[0]["aoi"] == "err"

    def test_outside_all_gets_default(self):
        table = parse_gaze_csv(make_csv([csv_row(x="0.05", y="0.05")]))
        out = annotate_aoi(table, AOIS, DefaultAoi("background", "NonError"))
        assert out.rows[0]["aoi"] == "background"

    def test_no_aois_no_default_is_config_error(self):
        table = parse_gaze_csv(make_csv([csv_row(qid="B9")]))
        with pytest.raises(ConfigurationError):
            annotate_aoi(table, AOIS, default=None)

    def test_brute_force_oracle(self):
        # independent point-in-rect check over randomized points and regions
        rng = np.random.Generator(np.random.PCG64(21))
        regions = []
        for i in range(4):
            x0, y0 = rng.uniform(0, 0.7), rng.uniform(0, 0.7)
            rect = (x0, y0, x0 + rng.uniform(0.05, 0.3), y0 + rng.uniform(0.05, 0.3))
            regions.append(
                AoiDefinition(f"r{i}", "A1", rect, "Error" if i % 2 == 0 else "NonError")
            )
        rows = [
            csv_row(t=i * 10, x=f"{rng.uniform(0, 1):.6g}", y=f"{rng.uniform(0, 1):.6g}")
            for i in range(100)
        ]
        table = parse_gaze_csv(make_csv(rows))
        out = annotate_aoi(table, regions, DefaultAoi("bg", "NonError"))
        for row in out.rows:
            x, y = row["gaze_x"], row["gaze_y"]
            expected = "bg"
            for region in regions:
                rx0, ry0, rx1, ry1 = region.rect
                if rx0 <= x <= rx1 and ry0 <= y <= ry1:
                    expected = region.name
                    break
            assert row["aoi"] == expected


class TestSessionize:
    def test_partition_counts(self):
        rows = [
            csv_row(pid="P1", qid="A1", t=0),
            csv_row(pid="P1", qid="A2", t=0),
            csv_row(pid="P2", qid="A1", t=0),
            csv_row(pid="P2", qid="A2", t=0),
        ]
        table = parse_gaze_csv(make_csv(rows))
        sessions = sessionize(table)
        assert len(sessions) == 4

    def test_partition_preserves_all_records(self):
        rng = np.random.Generator(np.random.PCG64(17))
        table = random_table(rng, 250)
        cleaned, _ = clean(table)
        sessions = sessionize(cleaned)
        assert sum(s.features.shape[0] for s in sessions.values()) == len(cleaned.rows)

    def test_lengths_match_generator_manifest(self):
        export = make_gaze_export(seed=23, n_experts=2, n_students=1, sequence_length=8)
        table = parse_gaze_csv(export.csv_text)
        cleaned, _ = clean(table)
        sessions = sessionize(cleaned)
        for key, session in sessions.items():
            expected = export.manifest["sequence_lengths"][f"{key[0]}:{key[1]}"]
            assert session.features.shape[0] == expected

    def test_feature_vector_layout(self):
        table = parse_gaze_csv(make_csv([csv_row(fix="123", sac="45.5", x="0.25", y="0.75")]))
        sessions = sessionize(table)
        features = sessions[("P1", "A1")].features
        assert features.shape == (1, 4)
        assert list(features[0]) == [123.0, 45.5, 0.25, 0.75]
