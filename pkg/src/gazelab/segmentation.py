"""Two-dimensional table splitting and prompt-bundle assembly.

Horizontal splitting treats every row as an independent JSON unit; vertical
splitting pairs each id column with each numeric column. Bundles chunk the
serialized payloads under a character budget and prepend the prompt template
for their (stage, prompt level) slot, so identical inputs always produce
byte-identical prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .canonical import canonical_json
from .errors import ConfigurationError, ValidationError
from .gaze_data import GazeTable

BUNDLE_STAGES = ("direct", "H", "V", "HV_merge", "anomaly", "difficulty", "inductive")
PROMPT_LEVELS = ("detailed", "semi_detailed", "brief")

DEFAULT_CHUNK_BUDGET = 12_000  # characters of payload data per chunk


class OversizeError(ValidationError):
    """A single payload cannot fit inside the chunk budget."""


@dataclass
class RowPayload:
    row_index: int
    fields: dict

    def serialize(self) -> str:
        return canonical_json({"row_index": self.row_index, "fields": self.fields})


@dataclass
class ColumnPairPayload:
    id_column: str
    value_column: str
    pairs: list  # [(id value, numeric value), ...] in table row order

    def serialize(self) -> str:
        return canonical_json(
            {
                "id_column": self.id_column,
                "value_column": self.value_column,
                "pairs": [list(p) for p in self.pairs],
            }
        )


@dataclass
class PromptBundle:
    stage: str
    prompt_level: str
    payload_chunks: list[str]  # fully rendered prompt strings, one per chunk
    carried_patterns: Optional[list] = None
    chunk_payload_counts: list[int] = field(default_factory=list)


def split_horizontal(table: GazeTable) -> list[RowPayload]:
    """One payload per row, in row order."""
    names = table.column_names()
    return [
        RowPayload(row_index=i, fields={name: row.get(name) for name in names})
        for i, row in enumerate(table.rows)
    ]


def split_vertical(table: GazeTable) -> list[ColumnPairPayload]:
    """One payload per (id column x numeric column), schema order."""
    id_cols = table.id_columns()
    num_cols = table.numeric_columns()
    if not id_cols:
        raise ConfigurationError("vertical split needs at least one id column")
    payloads = []
    for id_col in id_cols:
        for num_col in num_cols:
            pairs = [(row.get(id_col), row.get(num_col)) for row in table.rows]
            payloads.append(ColumnPairPayload(id_col, num_col, pairs))
    return payloads


def parse_row_payload(text: str) -> RowPayload:
    data = json.loads(text)
    return RowPayload(row_index=data["row_index"], fields=data["fields"])


def parse_column_pair_payload(text: str) -> ColumnPairPayload:
    data = json.loads(text)
    return ColumnPairPayload(
        id_column=data["id_column"],
        value_column=data["value_column"],
        pairs=[tuple(p) for p in data["pairs"]],
    )


class TemplateSet:
    """Prompt templates, one text file per slot with a {{DATA}} placeholder.

    Lookup tries ``<stage>_<level>.txt`` then ``<stage>.txt`` so stages
    without per-level wording (anomaly, inductive) need only one file.
    """

    def __init__(self, templates: dict[str, str]):
        self.templates = templates

    @classmethod
    def load(cls, directory: Optional[str] = None) -> "TemplateSet":
        if directory is None:
            root = resources.files("gazelab").joinpath("templates")
            names = [p.name for p in root.iterdir() if p.name.endswith(".txt")]
            templates = {name: root.joinpath(name).read_text("utf-8") for name in names}
        else:
            path = Path(directory)
            templates = {p.name: p.read_text("utf-8") for p in sorted(path.glob("*.txt"))}
        return cls(templates)

    def resolve(self, stage: str, prompt_level: str) -> str:
        for name in (f"{stage.lower()}_{prompt_level}.txt", f"{stage.lower()}.txt"):
            if name in self.templates:
                return self.templates[name]
        raise ConfigurationError(f"no prompt template for stage={stage!r} level={prompt_level!r}")


def serialize_carried_pattern(pattern) -> str:
    return canonical_json({"id": pattern.id, "stage": pattern.stage, "text": pattern.text})


def build_bundle(
    payloads: Sequence,
    stage: str,
    prompt_level: str,
    templates: TemplateSet,
    carried_patterns: Optional[list] = None,
    budget: int = DEFAULT_CHUNK_BUDGET,
) -> PromptBundle:
    """Chunk payloads greedily under ``budget`` characters and render prompts.

    For the merge stage the carried patterns *are* the data (the upstream
    outputs get re-analyzed together), so payloads are derived from them; for
    the vertical stage carried patterns ride along as a preamble in every
    chunk. A single payload larger than the budget is an error naming it.
    """
    if stage not in BUNDLE_STAGES:
        raise ValidationError(f"unknown bundle stage {stage!r}")
    if stage == "HV_merge":
        if not carried_patterns:
            raise ValidationError("HV_merge bundle requires carried patterns")
        carried_stages = {p.stage for p in carried_patterns}
        if not {"H", "V"} <= carried_stages:
            raise ValidationError(
                f"HV_merge needs patterns from both prior stages, got {sorted(carried_stages)}"
            )
        payload_texts = [serialize_carried_pattern(p) for p in carried_patterns]
        preamble = ""
    else:
        payload_texts = [p if isinstance(p, str) else p.serialize() for p in payloads]
        preamble = ""
        if carried_patterns:
            preamble = canonical_json(
                {"carried_patterns": [json.loads(serialize_carried_pattern(p)) for p in carried_patterns]}
            )

    template = templates.resolve(stage, prompt_level)
    overhead = len(preamble) + 1 if preamble else 0
    if overhead >= budget:
        raise OversizeError(
            f"carried-patterns preamble ({overhead} chars) exceeds chunk budget {budget}"
        )

    chunks: list[list[str]] = []
    current: list[str] = []
    used = overhead
    for i, text in enumerate(payload_texts):
        cost = len(text) + (1 if current else 0)
        if overhead + len(text) > budget:
            raise OversizeError(f"payload #{i} ({len(text)} chars) exceeds chunk budget {budget}")
        if used + cost > budget and current:
            chunks.append(current)
            current = [text]
            used = overhead + len(text)
        else:
            current.append(text)
            used += cost
    if current:
        chunks.append(current)
    if not chunks:
        chunks = [[]]

    rendered = []
    counts = []
    for chunk in chunks:
        body_lines = ([preamble] if preamble else []) + chunk
        rendered.append(template.replace("{{DATA}}", "\n".join(body_lines)))
        counts.append(len(chunk))

    return PromptBundle(
        stage=stage,
        prompt_level=prompt_level,
        payload_chunks=rendered,
        carried_patterns=list(carried_patterns) if carried_patterns else None,
        chunk_payload_counts=counts,
    )
