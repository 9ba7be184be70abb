"""Experiment grids (settings x models) and their tab-delimited rendering.

The consistency grid carries one row per (module, prompt level) combination
plus the no-module baseline; the difficulty grid carries the seven
(module, prompt variant) rows. Cells hold a score or NA.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ValidationError

MODEL_COLUMNS = ("4o", "o1", "r1")
MODEL_LABELS = {"gpt4o": "4o", "4o": "4o", "o1": "o1", "r1": "r1"}

CONSISTENCY_ROWS = (
    "Directly",
    "h+v(total)",
    "h(total)",
    "v(total)",
    "h+v(half)",
    "h(half)",
    "v(half)",
    "h+v(none)",
    "h(none)",
    "v(none)",
)

DIFFICULTY_ROWS = (
    "Directly(total)",
    "h+v(total)",
    "h(total)",
    "v(total)",
    "h+v(none)",
    "h(none)",
    "v(none)",
)

_STAGE_LABELS = {"H": "h", "V": "v", "HV": "h+v", "direct": "Directly", "Directly": "Directly"}
_LEVEL_LABELS = {"detailed": "total", "semi_detailed": "half", "brief": "none"}


def consistency_row_label(stage: str, prompt_level: str) -> str:
    if stage in ("direct", "Directly"):
        return "Directly"
    return f"{_STAGE_LABELS[stage]}({_LEVEL_LABELS[prompt_level]})"


def difficulty_row_label(module_setting: str, prompt_variant: str) -> str:
    if prompt_variant not in ("total", "none"):
        raise ValidationError(f"difficulty prompt variant must be total|none, got {prompt_variant!r}")
    if module_setting in ("direct", "Directly"):
        return f"Directly({prompt_variant})"
    return f"{_STAGE_LABELS[module_setting]}({prompt_variant})"


@dataclass
class ExperimentGrid:
    row_labels: tuple
    column_labels: tuple
    cells: dict = field(default_factory=dict)  # (row, col) -> float | None

    def set(self, row: str, col: str, value: Optional[float]):
        if row not in self.row_labels:
            raise ValidationError(f"unknown grid row {row!r}")
        if col not in self.column_labels:
            raise ValidationError(f"unknown grid column {col!r}")
        self.cells[(row, col)] = value

    def get(self, row: str, col: str) -> Optional[float]:
        return self.cells.get((row, col))

    def render_tsv(self) -> str:
        lines = ["\t".join(("",) + tuple(self.column_labels))]
        for row in self.row_labels:
            cells = []
            for col in self.column_labels:
                value = self.get(row, col)
                cells.append("NA" if value is None else f"{value:.3f}")
            lines.append("\t".join([row] + cells))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "rows": list(self.row_labels),
            "columns": list(self.column_labels),
            "cells": {
                row: {col: self.get(row, col) for col in self.column_labels}
                for row in self.row_labels
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentGrid":
        grid = cls(tuple(data["rows"]), tuple(data["columns"]))
        for row, cols in data["cells"].items():
            for col, value in cols.items():
                grid.set(row, col, value)
        return grid


def consistency_grid(cell_results) -> ExperimentGrid:
    """Arrange per-cell kappas into the 10 x 3 consistency grid.

    ``cell_results`` is an iterable of objects with stage, prompt_level,
    model_id, and report (a KappaReport or None). Cells never run stay NA;
    models outside the three canonical columns are ignored.
    """
    grid = ExperimentGrid(CONSISTENCY_ROWS, MODEL_COLUMNS)
    for cell in cell_results:
        col = MODEL_LABELS.get(cell.model_id)
        if col is None:
            continue
        row = consistency_row_label(cell.stage, cell.prompt_level)
        grid.set(row, col, None if cell.report is None else cell.report.kappa)
    return grid


def difficulty_grid(cell_accuracies: dict) -> ExperimentGrid:
    """Arrange mean accuracies keyed by (module_setting, prompt_variant,
    model_id) into the 7 x 3 difficulty grid."""
    grid = ExperimentGrid(DIFFICULTY_ROWS, MODEL_COLUMNS)
    for (setting, variant, model_id), value in sorted(cell_accuracies.items()):
        col = MODEL_LABELS.get(model_id)
        if col is None:
            continue
        row = difficulty_row_label(setting, variant)
        if row not in DIFFICULTY_ROWS:
            raise ValidationError(f"setting {setting!r}/{variant!r} is not a difficulty row")
        grid.set(row, col, value)
    return grid
