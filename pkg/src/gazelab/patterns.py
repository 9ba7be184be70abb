"""Behavioral pattern records and the text normalization behind their ids."""

from __future__ import annotations

import re
from dataclasses import dataclass, asdict
from typing import Optional

from .canonical import digest

PATTERN_STAGES = ("direct", "H", "V", "HV")

_ENUM_PREFIX = re.compile(r"^\s*(?:\d+\s*[.)]\s*|[-*•]\s+)")
_WS = re.compile(r"\s+")


def normalize_pattern_text(text: str) -> str:
    """Canonical form used for dedup and cross-model matching: lowercase,
    collapsed whitespace, no leading enumeration marker, no trailing
    punctuation."""
    text = _ENUM_PREFIX.sub("", text)
    text = _WS.sub(" ", text).strip().lower()
    return text.rstrip(".!?;:,")


def pattern_id(text: str) -> str:
    return digest(normalize_pattern_text(text))


@dataclass
class BehavioralPattern:
    id: str
    text: str
    stage: str            # direct | H | V | HV
    prompt_level: str
    model_id: str
    run_index: int
    frequency_class: Optional[str] = None  # high | low, set by classification

    @classmethod
    def make(cls, text, stage, prompt_level, model_id, run_index) -> "BehavioralPattern":
        return cls(
            id=pattern_id(text),
            text=text,
            stage=stage,
            prompt_level=prompt_level,
            model_id=model_id,
            run_index=run_index,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BehavioralPattern":
        return cls(**data)
