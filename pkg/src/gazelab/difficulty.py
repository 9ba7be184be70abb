"""Question-difficulty prediction: anonymization, prompt assembly, and the
repeated-run accuracy grid."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError
from .grids import ExperimentGrid, difficulty_grid
from .llm_gateway import Gateway, ModelSpec, TransportError
from .segmentation import PromptBundle, TemplateSet
from .synthetic import subseed

LEVELS = ("easy", "medium", "hard")
PROMPT_VARIANTS = ("total", "none")
MODULE_SETTINGS = ("Directly", "H", "V", "HV")
DEFAULT_REPETITIONS = 5

DEFAULT_LEXICON = (
    "easy", "simple", "basic", "beginner", "trivial", "straightforward",
    "medium", "intermediate", "moderate",
    "hard", "difficult", "challenging", "advanced", "complex", "tough", "expert",
)


@dataclass
class QuestionItem:
    question_id: str
    true_level: str
    raw_text: str
    anonymized_text: Optional[str] = None


def load_questions(records: Sequence[dict], strict: bool = True) -> list[QuestionItem]:
    items = [
        QuestionItem(r["question_id"], r["level"], r["text"]) for r in records
    ]
    if strict:
        if len(items) != 12:
            raise ValidationError(f"question corpus must have 12 items, got {len(items)}")
        for level in LEVELS:
            n = sum(1 for q in items if q.true_level == level)
            if n != 4:
                raise ValidationError(f"level {level!r} has {n} questions, expected 4")
    return items


def _strip_indicators(text: str, lexicon: Sequence[str]) -> str:
    # label prefixes like "EASY:", "[hard]", "(Medium) -"
    words = "|".join(re.escape(w) for w in lexicon)
    text = re.sub(rf"^\s*[\[\(]?\s*(?:{words})\s*[\]\)]?\s*[:\-]?\s*", "", text, flags=re.I)
    # sequential numbering: "Question 3", "Q7.", leading "3." or "3)"
    text = re.sub(r"\bquestion\s+\d+\b", "", text, flags=re.I)
    text = re.sub(r"^\s*(?:q\s*)?\d+\s*[.)]\s*", "", text, flags=re.I)
    # any remaining lexicon word
    text = re.sub(rf"\b(?:{words})\b", "", text, flags=re.I)
    text = re.sub(r"\s{2,}", " ", text)
    text = re.sub(r"\s+([,.;:])", r"\1", text)
    return text.strip()


def anonymize(
    items: Sequence[QuestionItem], seed: int, lexicon: Sequence[str] = DEFAULT_LEXICON
) -> list[QuestionItem]:
    """Strip difficulty indicators and reshuffle presentation order.

    The shuffle is applied to the corpus in canonical (question id) order, so
    running anonymize twice with the same seed gives the same order and the
    same texts: the operation is idempotent.
    """
    ordered = sorted(items, key=lambda q: q.question_id)
    anonymized = [
        QuestionItem(
            question_id=q.question_id,
            true_level=q.true_level,
            raw_text=q.raw_text,
            anonymized_text=_strip_indicators(q.anonymized_text or q.raw_text, lexicon),
        )
        for q in ordered
    ]
    rng = np.random.Generator(np.random.PCG64(subseed(seed, "anonymize")))
    perm = rng.permutation(len(anonymized))
    return [anonymized[int(i)] for i in perm]


EVEN_DISTRIBUTION_SENTENCE = (
    "There are 12 questions, evenly distributed across three difficulty "
    "levels: easy, medium, and hard (four questions per level)."
)


def build_difficulty_prompt(
    items: Sequence[QuestionItem],
    prompt_variant: str,
    module_setting: str,
    templates: TemplateSet,
    h_payloads: Optional[Sequence[str]] = None,
    v_payloads: Optional[Sequence[str]] = None,
) -> PromptBundle:
    """Assemble the single-chunk difficulty prompt.

    The total variant states the 12-question/3-level distribution; the none
    variant says nothing about counts. Module settings H/V/HV attach the
    corresponding segmentation payload strings verbatim (so their digests
    can be traced back to the segmentation artifacts of the run).
    """
    if prompt_variant not in PROMPT_VARIANTS:
        raise ValidationError(f"prompt_variant must be one of {PROMPT_VARIANTS}")
    if module_setting not in MODULE_SETTINGS:
        raise ValidationError(f"module_setting must be one of {MODULE_SETTINGS}")
    if module_setting in ("H", "HV") and not h_payloads:
        raise ConfigurationError("module setting needs horizontal payloads but none were given")
    if module_setting in ("V", "HV") and not v_payloads:
        raise ConfigurationError("module setting needs vertical payloads but none were given")

    lines = []
    for q in items:
        if q.anonymized_text is None:
            raise ValidationError(f"question {q.question_id} is not anonymized")
        lines.append(f"[Q:{q.question_id}] {q.anonymized_text}")
    if module_setting in ("H", "HV"):
        lines.append("[H-PAYLOADS]")
        lines.extend(h_payloads)
    if module_setting in ("V", "HV"):
        lines.append("[V-PAYLOADS]")
        lines.extend(v_payloads)

    template = templates.resolve("difficulty", prompt_variant)
    prompt = template.replace("{{DATA}}", "\n".join(lines))
    return PromptBundle(
        stage="difficulty", prompt_level=prompt_variant, payload_chunks=[prompt],
        chunk_payload_counts=[len(lines)],
    )


def parse_answers(text: str, question_ids: Sequence[str]) -> dict[str, Optional[str]]:
    """Pull one level per question id from a response; first match wins."""
    answers: dict[str, Optional[str]] = {}
    for qid in question_ids:
        match = re.search(
            rf"\b{re.escape(qid)}\b.{{0,24}}?\b(easy|medium|hard)\b", text, flags=re.I
        )
        answers[qid] = match.group(1).lower() if match else None
    return answers


@dataclass
class PredictionRun:
    model_id: str
    prompt_variant: str
    module_setting: str
    repetition: int
    answers: dict          # qid -> level or None
    accuracy: float
    parseable: int

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "prompt_variant": self.prompt_variant,
            "module_setting": self.module_setting,
            "repetition": self.repetition,
            "answers": self.answers,
            "accuracy": self.accuracy,
            "parseable": self.parseable,
        }


def run_and_score(
    items: Sequence[QuestionItem],
    settings: Sequence[tuple[str, str]],
    specs: Sequence[ModelSpec],
    gateway: Gateway,
    templates: TemplateSet,
    seed: int,
    repetitions: int = DEFAULT_REPETITIONS,
    h_payloads: Optional[Sequence[str]] = None,
    v_payloads: Optional[Sequence[str]] = None,
) -> tuple[ExperimentGrid, list[PredictionRun]]:
    """Run the (setting x model) grid with repetitions and average accuracy.

    Unparseable answers count as wrong; a transport failure makes the whole
    repetition unparseable. A cell renders NA only when every repetition
    produced zero parseable answers.
    """
    truth = {q.question_id: q.true_level for q in items}
    runs: list[PredictionRun] = []
    cells: dict[tuple[str, str, str], Optional[float]] = {}

    for module_setting, prompt_variant in settings:
        for spec in specs:
            accuracies = []
            total_parseable = 0
            for rep in range(repetitions):
                rep_items = anonymize(items, subseed(seed, module_setting, prompt_variant, spec.model_id, rep))
                bundle = build_difficulty_prompt(
                    rep_items, prompt_variant, module_setting, templates,
                    h_payloads=h_payloads, v_payloads=v_payloads,
                )
                answers: dict[str, Optional[str]] = {q.question_id: None for q in rep_items}
                try:
                    resp = gateway.complete(bundle.payload_chunks[0], spec, run_index=rep)
                    answers = parse_answers(resp.text, [q.question_id for q in rep_items])
                except TransportError:
                    pass
                parseable = sum(1 for v in answers.values() if v is not None)
                correct = sum(1 for qid, v in answers.items() if v == truth[qid])
                accuracy = correct / len(rep_items)
                total_parseable += parseable
                accuracies.append(accuracy)
                runs.append(
                    PredictionRun(
                        model_id=spec.model_id,
                        prompt_variant=prompt_variant,
                        module_setting=module_setting,
                        repetition=rep,
                        answers=answers,
                        accuracy=accuracy,
                        parseable=parseable,
                    )
                )
            value = None if total_parseable == 0 else sum(accuracies) / len(accuracies)
            cells[(module_setting, prompt_variant, spec.model_id)] = value

    return difficulty_grid(cells), runs
