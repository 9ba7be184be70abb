"""Expert-model co-scoring: literature-evidence scores, verdicts, and
Cohen's Kappa between the two raters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import GazelabError, ValidationError

QUARTILES = ("Q1", "Q2", "Q3", "Q4")
STANCES = (-1, 0, 1)
VERDICT_VALID = "valid"
VERDICT_INVALID = "invalid"
VERDICTS = (VERDICT_VALID, VERDICT_INVALID)
RATER_EXPERT = "expert"
RATER_LITERATURE = "literature"
KAPPA_CONSISTENCY_BAR = 0.6


class DomainError(ValidationError):
    """An evidence field is outside its documented domain."""


class DegenerateMarginalsError(GazelabError):
    """Chance agreement is 1 while observed agreement is not; kappa undefined."""


@dataclass(frozen=True)
class LiteratureEvidence:
    """One recommended paper's contribution to a pattern's score.

    Citation points follow recommendation order (1st..5th -> 5..1) and
    ranking points follow journal quartile (Q1..Q4 -> 4..1); the stance sign
    decides whether the weight supports or opposes the pattern.
    """

    pattern_id: str
    rank: int       # recommendation order, 1..5
    quartile: str   # Q1..Q4
    stance: int     # +1 support, -1 oppose, 0 neutral

    def __post_init__(self):
        if not 1 <= self.rank <= 5:
            raise DomainError(f"rank must be 1..5, got {self.rank}")
        if self.quartile not in QUARTILES:
            raise DomainError(f"quartile must be one of {QUARTILES}, got {self.quartile!r}")
        if self.stance not in STANCES:
            raise DomainError(f"stance must be -1, 0, or +1, got {self.stance}")

    @property
    def citation_points(self) -> int:
        return 6 - self.rank

    @property
    def ranking_points(self) -> int:
        return 5 - (QUARTILES.index(self.quartile) + 1)


def score_evidence(e: LiteratureEvidence, weight_c: float = 1.0, weight_r: float = 1.0):
    """Score one evidence record: (C + R) * S, optionally with per-dimension
    weights (default 1, which keeps the score an exact integer)."""
    if weight_c == 1.0 and weight_r == 1.0:
        return (e.citation_points + e.ranking_points) * e.stance
    return (weight_c * e.citation_points + weight_r * e.ranking_points) * e.stance


@dataclass
class PatternScore:
    pattern_id: str
    components: list  # F_i per evidence record, rank order
    total: float
    literature_verdict: str
    tie: bool = False  # total == 0, resolved to invalid; kept for audit


def score_pattern(
    evidence: Sequence[LiteratureEvidence], weight_c: float = 1.0, weight_r: float = 1.0
) -> PatternScore:
    """Combine exactly five evidence records into one pattern score.

    Ranks must form a permutation of 1..5. The total decides the literature
    verdict: positive -> valid, otherwise invalid (a zero total is a tie,
    resolved conservatively to invalid and flagged for audit).
    """
    if len(evidence) != 5:
        raise ValidationError(f"need exactly 5 evidence records, got {len(evidence)}")
    pattern_ids = {e.pattern_id for e in evidence}
    if len(pattern_ids) != 1:
        raise ValidationError(f"evidence mixes patterns: {sorted(pattern_ids)}")
    if sorted(e.rank for e in evidence) != [1, 2, 3, 4, 5]:
        raise ValidationError("evidence ranks must be a permutation of 1..5")

    ordered = sorted(evidence, key=lambda e: e.rank)
    components = [score_evidence(e, weight_c, weight_r) for e in ordered]
    total = sum(components)
    return PatternScore(
        pattern_id=ordered[0].pattern_id,
        components=components,
        total=total,
        literature_verdict=VERDICT_VALID if total > 0 else VERDICT_INVALID,
        tie=(total == 0),
    )


@dataclass
class ReviewVerdict:
    pattern_id: str
    rater: str    # expert | literature
    verdict: str  # valid | invalid
    timestamp: str
    note: Optional[str] = None

    def __post_init__(self):
        if self.rater not in (RATER_EXPERT, RATER_LITERATURE):
            raise ValidationError(f"unknown rater {self.rater!r}")
        if self.verdict not in VERDICTS:
            raise ValidationError(f"unknown verdict {self.verdict!r}")

    def to_dict(self) -> dict:
        record = {
            "pattern_id": self.pattern_id,
            "rater": self.rater,
            "verdict": self.verdict,
            "timestamp": self.timestamp,
        }
        if self.note is not None:
            record["note"] = self.note
        return record


@dataclass
class KappaReport:
    n: int
    p_o: float
    p_e: float
    kappa: float
    consistent: bool
    contingency: list  # [[both valid, a valid b invalid], [a invalid b valid, both invalid]]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p_o": self.p_o,
            "p_e": self.p_e,
            "kappa": self.kappa,
            "consistent": self.consistent,
            "contingency": self.contingency,
        }


def cohen_kappa(a: Sequence[str], b: Sequence[str]) -> KappaReport:
    """Cohen's Kappa over two aligned binary verdict vectors.

    Observed agreement is the contingency trace over n; chance agreement
    comes from the marginal products. Both raters unanimous on the same
    category makes chance agreement 1 with perfect observed agreement, which
    resolves to kappa 1 by convention.
    """
    if len(a) != len(b):
        raise ValidationError(f"verdict vectors differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 1:
        raise ValidationError("kappa needs at least one item")
    for v in list(a) + list(b):
        if v not in VERDICTS:
            raise ValidationError(f"unknown verdict {v!r}")

    counts = [[0, 0], [0, 0]]
    for va, vb in zip(a, b):
        counts[0 if va == VERDICT_VALID else 1][0 if vb == VERDICT_VALID else 1] += 1

    p_o = (counts[0][0] + counts[1][1]) / n
    a_valid = (counts[0][0] + counts[0][1]) / n
    b_valid = (counts[0][0] + counts[1][0]) / n
    p_e = a_valid * b_valid + (1.0 - a_valid) * (1.0 - b_valid)

    if p_e == 1.0:
        if p_o == 1.0:
            kappa = 1.0
        else:
            raise DegenerateMarginalsError(
                f"chance agreement is 1 but observed agreement is {p_o}"
            )
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)

    return KappaReport(
        n=n,
        p_o=p_o,
        p_e=p_e,
        kappa=kappa,
        consistent=kappa > KAPPA_CONSISTENCY_BAR,
        contingency=counts,
    )


@dataclass
class CellKappa:
    """Kappa for one (stage, prompt level, model) mining cell."""

    stage: str
    prompt_level: str
    model_id: str
    report: Optional[KappaReport] = None
    items: int = 0


def paired_verdicts(
    pattern_ids: Sequence[str], verdicts: dict
) -> tuple[list[str], list[str], list[str]]:
    """Align expert and literature verdicts over the given patterns.

    ``verdicts`` maps (pattern_id, rater) -> verdict string. Returns the two
    vectors plus the pattern ids actually paired (those with both raters).
    """
    expert, literature, used = [], [], []
    for pid in pattern_ids:
        ev = verdicts.get((pid, RATER_EXPERT))
        lv = verdicts.get((pid, RATER_LITERATURE))
        if ev is not None and lv is not None:
            expert.append(ev)
            literature.append(lv)
            used.append(pid)
    return expert, literature, used


def cell_kappas(
    cells: dict[tuple[str, str, str], Sequence[str]], verdicts: dict
) -> list[CellKappa]:
    """Compute per-cell kappas from pattern-id sets and a verdict map.

    Cells without any fully paired pattern get an empty report (rendered NA).
    """
    out = []
    for (stage, level, model_id), pids in sorted(cells.items()):
        expert, literature, used = paired_verdicts(pids, verdicts)
        if used:
            try:
                report = cohen_kappa(expert, literature)
            except DegenerateMarginalsError:
                report = None
        else:
            report = None
        out.append(CellKappa(stage, level, model_id, report, items=len(used)))
    return out
