"""Mining grid orchestration: run cells, aggregate repetitions, deduplicate,
classify cross-model frequency, and draw the composite sample."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .gaze_data import GazeTable
from .llm_gateway import Gateway, ModelSpec, parse_patterns
from .patterns import BehavioralPattern
from .segmentation import (
    DEFAULT_CHUNK_BUDGET,
    PromptBundle,
    TemplateSet,
    build_bundle,
    split_horizontal,
    split_vertical,
)
from .synthetic import subseed

MINING_STAGES = ("direct", "H", "V", "HV")
HIGH_RATE = Fraction(3, 10)  # share of high-frequency patterns sampled
LOW_RATE = Fraction(1, 10)   # share of low-frequency patterns sampled


@dataclass
class PatternSet:
    stage: str
    prompt_level: str
    model_id: str  # a model id, or "merged"/"composite" for aggregates
    patterns: list[BehavioralPattern] = field(default_factory=list)
    deduped: bool = False

    def cell_key(self) -> tuple[str, str, str]:
        return (self.stage, self.prompt_level, self.model_id)

    def ids(self) -> list[str]:
        return [p.id for p in self.patterns]


def _direct_payloads(table: GazeTable) -> list[str]:
    """The no-module baseline feeds raw delimited lines, not JSON units."""
    from .gaze_data import emit_csv

    return emit_csv(table).splitlines()


def _bundle_for_stage(
    table: GazeTable,
    stage: str,
    prompt_level: str,
    templates: TemplateSet,
    budget: int,
    carried: Optional[list[BehavioralPattern]] = None,
) -> PromptBundle:
    if stage == "direct":
        payloads = _direct_payloads(table)
        return build_bundle(payloads, "direct", prompt_level, templates, budget=budget)
    if stage == "H":
        payloads = [p.serialize() for p in split_horizontal(table)]
        return build_bundle(payloads, "H", prompt_level, templates, budget=budget)
    if stage == "V":
        payloads = [p.serialize() for p in split_vertical(table)]
        return build_bundle(
            payloads, "V", prompt_level, templates, carried_patterns=carried, budget=budget
        )
    raise ValidationError(f"unknown mining stage {stage!r}")


def mine_cell(
    table: GazeTable,
    stage: str,
    prompt_level: str,
    spec: ModelSpec,
    gateway: Gateway,
    templates: TemplateSet,
    n_runs: int = 10,
    budget: int = DEFAULT_CHUNK_BUDGET,
) -> PatternSet:
    """Mine one (stage, prompt level, model) cell with ``n_runs`` repetitions.

    The combined stage runs horizontal first, feeds those patterns into the
    vertical pass, then has the model re-analyze both output sets in a merge
    pass; only the merge output becomes the cell's patterns.
    """
    if stage not in MINING_STAGES:
        raise ValidationError(f"unknown mining stage {stage!r}")

    if stage != "HV":
        bundle = _bundle_for_stage(table, stage, prompt_level, templates, budget)
        responses = gateway.run_repeated(bundle, spec, n_runs)
        patterns = []
        for resp in responses:
            patterns.extend(parse_patterns(resp, stage, prompt_level))
        return PatternSet(stage, prompt_level, spec.model_id, patterns, deduped=False)

    h_set = mine_cell(table, "H", prompt_level, spec, gateway, templates, n_runs, budget)
    carried_h = dedupe(h_set).patterns

    v_bundle = _bundle_for_stage(table, "V", prompt_level, templates, budget, carried=carried_h)
    v_patterns: list[BehavioralPattern] = []
    for resp in gateway.run_repeated(v_bundle, spec, n_runs):
        v_patterns.extend(parse_patterns(resp, "V", prompt_level))
    carried_v = dedupe(PatternSet("V", prompt_level, spec.model_id, v_patterns)).patterns

    merge_bundle = build_bundle(
        [], "HV_merge", prompt_level, templates,
        carried_patterns=carried_h + carried_v, budget=budget,
    )
    merged: list[BehavioralPattern] = []
    for resp in gateway.run_repeated(merge_bundle, spec, n_runs):
        merged.extend(parse_patterns(resp, "HV", prompt_level))
    return PatternSet("HV", prompt_level, spec.model_id, merged, deduped=False)


def dedupe(pattern_set: PatternSet) -> PatternSet:
    """Keep the first occurrence of each id (earliest run, then input order)."""
    ordered = sorted(
        range(len(pattern_set.patterns)),
        key=lambda i: (pattern_set.patterns[i].run_index, i),
    )
    seen = set()
    kept = []
    for i in ordered:
        p = pattern_set.patterns[i]
        if p.id not in seen:
            seen.add(p.id)
            kept.append(p)
    return PatternSet(
        pattern_set.stage, pattern_set.prompt_level, pattern_set.model_id, kept, deduped=True
    )


def classify_frequency(sets: Sequence[PatternSet]) -> list[BehavioralPattern]:
    """Label each distinct pattern high (seen in >= 2 models) or low.

    All sets must be deduped, belong to the same (stage, prompt level) cell,
    and come from at least two distinct models. Output order: first
    occurrence across the sets in the order given.
    """
    if len(sets) < 2:
        raise ValidationError("frequency classification needs at least two model sets")
    cells = {(s.stage, s.prompt_level) for s in sets}
    if len(cells) != 1:
        raise ValidationError(f"sets span multiple cells: {sorted(cells)}")
    if len({s.model_id for s in sets}) < 2:
        raise ValidationError("frequency classification needs >= 2 distinct models")
    for s in sets:
        if not s.deduped:
            raise ValidationError(f"set for model {s.model_id!r} is not deduped")

    membership: dict[str, set] = {}
    for s in sets:
        for p in s.patterns:
            membership.setdefault(p.id, set()).add(s.model_id)

    labeled: list[BehavioralPattern] = []
    seen = set()
    for s in sets:
        for p in s.patterns:
            if p.id in seen:
                continue
            seen.add(p.id)
            cls = "high" if len(membership[p.id]) >= 2 else "low"
            labeled.append(
                BehavioralPattern(
                    id=p.id,
                    text=p.text,
                    stage=p.stage,
                    prompt_level=p.prompt_level,
                    model_id=p.model_id,
                    run_index=p.run_index,
                    frequency_class=cls,
                )
            )
    return labeled


def sample_composite(labeled: Sequence[BehavioralPattern], seed: int) -> PatternSet:
    """Draw ceil(30% of high) + ceil(10% of low) patterns, seeded, without
    replacement; original order is preserved inside each class."""
    high = [p for p in labeled if p.frequency_class == "high"]
    low = [p for p in labeled if p.frequency_class == "low"]
    unlabeled = len(labeled) - len(high) - len(low)
    if unlabeled:
        raise ValidationError(f"{unlabeled} patterns lack a frequency class")

    n_high = math.ceil(HIGH_RATE * len(high))
    n_low = math.ceil(LOW_RATE * len(low))

    rng = np.random.Generator(np.random.PCG64(subseed(seed, "composite")))
    picked: list[BehavioralPattern] = []
    for pool, count in ((high, n_high), (low, n_low)):
        if count:
            idx = sorted(int(i) for i in rng.choice(len(pool), size=count, replace=False))
            picked.extend(pool[i] for i in idx)

    stage = labeled[0].stage if labeled else "H"
    level = labeled[0].prompt_level if labeled else "detailed"
    return PatternSet(stage, level, "composite", picked, deduped=True)
