"""Gaze table ingestion, cleaning, AOI annotation, and sessionization.

The tabular model is deliberately generic: a table is an ordered list of
column definitions plus one dict per row. Gaze-specific operations locate
the columns they need through a :class:`ColumnRoles` mapping so that files
with renamed columns can be ingested by configuration alone.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .canonical import format_number
from .errors import ConfigurationError, GazelabError, ValidationError

KIND_ID = "id"
KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"
VALID_KINDS = (KIND_ID, KIND_NUMERIC, KIND_CATEGORICAL)

_INT_RE = re.compile(r"^[+-]?\d+$")


class SchemaError(ValidationError):
    """The input header does not match the declared column schema."""


class EmptyTableError(ValidationError):
    """The input contained a header but no data rows (or nothing at all)."""


class EmptyResultError(GazelabError):
    """Cleaning dropped every row; the report explains why."""

    def __init__(self, report: "CleanReport"):
        super().__init__(f"cleaning dropped all {report.rows_in} rows")
        self.report = report


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class ColumnRoles:
    """Names of the columns that gaze-specific operations rely on."""

    participant: str = "participant_id"
    question: str = "question_id"
    timestamp: str = "timestamp_ms"
    fixation_number: str = "fixation_number"
    fixation_duration: str = "fixation_duration_ms"
    saccade_number: str = "saccade_number"
    saccade_duration: str = "saccade_duration_ms"
    gaze_x: str = "gaze_x"
    gaze_y: str = "gaze_y"
    role: str = "role"
    expertise: str = "expertise"
    aoi: str = "aoi"
    aoi_category: str = "aoi_category"

    def feature_columns(self) -> tuple[str, str, str, str]:
        # The per-record feature vector fed to the sequence model.
        return (self.fixation_duration, self.saccade_duration, self.gaze_x, self.gaze_y)


DEFAULT_COLUMNS: tuple[Column, ...] = (
    Column("participant_id", KIND_ID),
    Column("role", KIND_CATEGORICAL),
    Column("expertise", KIND_CATEGORICAL),
    Column("question_id", KIND_ID),
    Column("timestamp_ms", KIND_NUMERIC),
    Column("fixation_number", KIND_NUMERIC),
    Column("fixation_duration_ms", KIND_NUMERIC),
    Column("saccade_number", KIND_NUMERIC),
    Column("saccade_duration_ms", KIND_NUMERIC),
    Column("gaze_x", KIND_NUMERIC),
    Column("gaze_y", KIND_NUMERIC),
)


@dataclass
class GazeRecord:
    """Typed view of one table row under a given role mapping."""

    participant_id: str
    question_id: str
    timestamp_ms: float
    fixation_number: Optional[float]
    fixation_duration_ms: Optional[float]
    saccade_number: Optional[float]
    saccade_duration_ms: Optional[float]
    gaze_x: Optional[float]
    gaze_y: Optional[float]
    role: Optional[str] = None
    expertise: Optional[str] = None
    aoi: Optional[str] = None
    aoi_category: Optional[str] = None

    @classmethod
    def from_row(cls, row: dict, roles: ColumnRoles) -> "GazeRecord":
        return cls(
            participant_id=row.get(roles.participant),
            question_id=row.get(roles.question),
            timestamp_ms=row.get(roles.timestamp),
            fixation_number=row.get(roles.fixation_number),
            fixation_duration_ms=row.get(roles.fixation_duration),
            saccade_number=row.get(roles.saccade_number),
            saccade_duration_ms=row.get(roles.saccade_duration),
            gaze_x=row.get(roles.gaze_x),
            gaze_y=row.get(roles.gaze_y),
            role=row.get(roles.role),
            expertise=row.get(roles.expertise),
            aoi=row.get(roles.aoi),
            aoi_category=row.get(roles.aoi_category),
        )


@dataclass
class GazeTable:
    columns: list[Column]
    rows: list[dict]
    provenance: dict = field(default_factory=dict)

    def kinds(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.columns}

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def id_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == KIND_ID]

    def numeric_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == KIND_NUMERIC]

    def records(self, roles: ColumnRoles = ColumnRoles()) -> list[GazeRecord]:
        return [GazeRecord.from_row(r, roles) for r in self.rows]


@dataclass(frozen=True)
class AoiDefinition:
    """Axis-aligned screen region, normalized coordinates, inclusive edges."""

    name: str
    question_id: str
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1
    category: str  # "Error" | "NonError"

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        if not (x1 > x0 and y1 > y0):
            raise ValidationError(f"AOI {self.name!r} has non-positive area: {self.rect}")
        if self.category not in ("Error", "NonError"):
            raise ValidationError(f"AOI {self.name!r} category must be Error or NonError")

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True)
class DefaultAoi:
    name: str = "question_stem"
    category: str = "NonError"


@dataclass
class CleanReport:
    rows_in: int
    rows_out: int
    dropped_missing: int
    dropped_noise: int
    dropped_irrelevant: int

    def balanced(self) -> bool:
        dropped = self.dropped_missing + self.dropped_noise + self.dropped_irrelevant
        return self.rows_out == self.rows_in - dropped


@dataclass(frozen=True)
class CleaningConfig:
    min_fixation_ms: float = 50.0
    max_fixation_ms: float = 2000.0
    # When set, rows whose question id is not listed are dropped as irrelevant.
    question_ids: Optional[tuple[str, ...]] = None


def _parse_cell(raw: str, kind: str):
    raw = raw.strip()
    if raw == "":
        return None
    if kind == KIND_NUMERIC:
        if _INT_RE.match(raw):
            return int(raw)
        try:
            return float(raw)
        except ValueError:
            return None  # unparseable numeric cell -> missing, never zeroed
    return raw


def parse_gaze_csv(source, columns=DEFAULT_COLUMNS) -> GazeTable:
    """Parse a delimited text export into a :class:`GazeTable`.

    ``source`` may be bytes, text, or a text file object. The delimiter is
    auto-detected from the header line (tab wins over comma). Every declared
    column must appear in the header; extra file columns are ignored.
    Unparseable or empty cells become ``None`` (missing) for cleaning to
    handle.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    stripped = text.strip("\n\r \t")
    if not stripped:
        raise EmptyTableError("input contains no header row")

    header_line = stripped.splitlines()[0]
    delimiter = "\t" if "\t" in header_line else ","

    reader = csv.reader(io.StringIO(stripped), delimiter=delimiter)
    header = next(reader)
    header = [h.strip() for h in header]

    columns = [c if isinstance(c, Column) else Column(*c) for c in columns]
    missing = [c.name for c in columns if c.name not in header]
    if missing:
        raise SchemaError(f"header is missing declared columns: {', '.join(missing)}")

    positions = {c.name: header.index(c.name) for c in columns}
    rows = []
    for raw in reader:
        if not raw or all(cell.strip() == "" for cell in raw):
            continue
        row = {}
        for col in columns:
            idx = positions[col.name]
            row[col.name] = _parse_cell(raw[idx], col.kind) if idx < len(raw) else None
        rows.append(row)

    if not rows:
        raise EmptyTableError("input contains a header but no data rows")

    return GazeTable(
        columns=list(columns),
        rows=rows,
        provenance={"delimiter": delimiter, "rows_parsed": len(rows)},
    )


def emit_csv(table: GazeTable) -> str:
    """Re-emit a table in its source delimited format, byte-stable."""
    delimiter = table.provenance.get("delimiter", ",")
    kinds = table.kinds()
    out = io.StringIO()
    writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    writer.writerow(table.column_names())
    for row in table.rows:
        cells = []
        for name in table.column_names():
            value = row.get(name)
            if value is None:
                cells.append("")
            elif kinds[name] == KIND_NUMERIC:
                cells.append(format_number(value))
            else:
                cells.append(str(value))
        writer.writerow(cells)
    return out.getvalue()


def clean(
    table: GazeTable,
    cfg: CleaningConfig = CleaningConfig(),
    roles: ColumnRoles = ColumnRoles(),
) -> tuple[GazeTable, CleanReport]:
    """Drop unusable rows and canonicalize ordering.

    Rules, applied in order (a row is counted once, under the first rule it
    trips): missing value in any numeric or id column -> missing; question id
    outside the configured experiment list -> irrelevant; fixation duration
    outside [min, max] -> noise. Duplicate timestamps within one
    (participant, question) sequence also count as noise; the later record
    wins, matching how eye-tracker exports repeat frames.

    The output is sorted by (participant, question, timestamp), which makes
    cleaning idempotent and downstream sequence extraction deterministic.
    """
    kinds = table.kinds()
    checked_cols = [c.name for c in table.columns if c.kind in (KIND_NUMERIC, KIND_ID)]

    dropped_missing = 0
    dropped_noise = 0
    dropped_irrelevant = 0
    kept: list[dict] = []
    for row in table.rows:
        if any(row.get(name) is None for name in checked_cols):
            dropped_missing += 1
            continue
        qid = row.get(roles.question)
        if cfg.question_ids is not None and qid not in cfg.question_ids:
            dropped_irrelevant += 1
            continue
        fix = row.get(roles.fixation_duration)
        if fix is not None and not (cfg.min_fixation_ms <= fix <= cfg.max_fixation_ms):
            dropped_noise += 1
            continue
        kept.append(row)

    # Canonical order, then drop duplicate timestamps keeping the later record.
    groups: dict[tuple, list[dict]] = {}
    for row in kept:
        groups.setdefault((row.get(roles.participant), row.get(roles.question)), []).append(row)

    out_rows: list[dict] = []
    for key in sorted(groups):
        seq = sorted(groups[key], key=lambda r: r.get(roles.timestamp))
        deduped: list[dict] = []
        for row in seq:
            if deduped and deduped[-1].get(roles.timestamp) == row.get(roles.timestamp):
                deduped[-1] = row
                dropped_noise += 1
            else:
                deduped.append(row)
        out_rows.extend(deduped)

    report = CleanReport(
        rows_in=len(table.rows),
        rows_out=len(out_rows),
        dropped_missing=dropped_missing,
        dropped_noise=dropped_noise,
        dropped_irrelevant=dropped_irrelevant,
    )
    assert report.balanced()
    if table.rows and not out_rows:
        raise EmptyResultError(report)

    cleaned = GazeTable(
        columns=list(table.columns),
        rows=out_rows,
        provenance={**table.provenance, "cleaned": True},
    )
    return cleaned, report


def annotate_aoi(
    table: GazeTable,
    aois: list[AoiDefinition],
    default: Optional[DefaultAoi] = DefaultAoi(),
    roles: ColumnRoles = ColumnRoles(),
) -> GazeTable:
    """Assign every record an AOI by point-in-rectangle test.

    Regions are checked in declaration order and the first hit wins, so
    overlaps resolve deterministically. Points outside every region get the
    declared default AOI. A question with no regions and no default is a
    configuration error.
    """
    by_question: dict[str, list[AoiDefinition]] = {}
    for aoi in aois:
        by_question.setdefault(aoi.question_id, []).append(aoi)

    annotated_rows = []
    for row in table.rows:
        qid = row.get(roles.question)
        regions = by_question.get(qid, [])
        if not regions and default is None:
            raise ConfigurationError(
                f"question {qid!r} has no AOI definitions and no default AOI is declared"
            )
        x, y = row.get(roles.gaze_x), row.get(roles.gaze_y)
        hit = None
        if x is not None and y is not None:
            for region in regions:
                if region.contains(x, y):
                    hit = region
                    break
        if hit is not None:
            name, category = hit.name, hit.category
        elif default is not None:
            name, category = default.name, default.category
        else:
            raise ConfigurationError(
                f"record in question {qid!r} falls outside all AOIs and no default is declared"
            )
        new_row = dict(row)
        new_row[roles.aoi] = name
        new_row[roles.aoi_category] = category
        annotated_rows.append(new_row)

    columns = list(table.columns)
    names = {c.name for c in columns}
    if roles.aoi not in names:
        columns.append(Column(roles.aoi, KIND_CATEGORICAL))
    if roles.aoi_category not in names:
        columns.append(Column(roles.aoi_category, KIND_CATEGORICAL))

    # The unannotated table stays with the caller; provenance records that an
    # annotation pass happened so reports can distinguish the two copies.
    return GazeTable(
        columns=columns,
        rows=annotated_rows,
        provenance={**table.provenance, "aoi_annotated": True},
    )


@dataclass
class Session:
    """One (participant, question) sequence in timestamp order."""

    participant_id: str
    question_id: str
    expertise: Optional[str]
    timestamps: list
    features: np.ndarray  # (n, 4): fixation dur, saccade dur, gaze x, gaze y
    aoi_categories: list


def sessionize(table: GazeTable, roles: ColumnRoles = ColumnRoles()) -> dict[tuple, Session]:
    """Partition a cleaned, annotated table into per-(participant, question)
    feature sequences, keyed by ``(participant_id, question_id)``."""
    feature_cols = roles.feature_columns()
    grouped: dict[tuple, list[dict]] = {}
    for row in table.rows:
        key = (row.get(roles.participant), row.get(roles.question))
        grouped.setdefault(key, []).append(row)

    sessions: dict[tuple, Session] = {}
    for key in sorted(grouped):
        rows = sorted(grouped[key], key=lambda r: r.get(roles.timestamp))
        features = np.array(
            [[float(r.get(c, 0.0) or 0.0) for c in feature_cols] for r in rows],
            dtype=np.float64,
        )
        sessions[key] = Session(
            participant_id=key[0],
            question_id=key[1],
            expertise=rows[0].get(roles.expertise),
            timestamps=[r.get(roles.timestamp) for r in rows],
            features=features,
            aoi_categories=[r.get(roles.aoi_category) for r in rows],
        )
    return sessions


def load_aoi_definitions(records: list[dict]) -> list[AoiDefinition]:
    """Build AOI definitions from parsed JSON records
    ``{name, question_id, rect: [x0, y0, x1, y1], category}``."""
    out = []
    for rec in records:
        out.append(
            AoiDefinition(
                name=rec["name"],
                question_id=rec["question_id"],
                rect=tuple(float(v) for v in rec["rect"]),
                category=rec["category"],
            )
        )
    return out
