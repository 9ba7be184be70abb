"""HTTP service wrapping the run store: review workflow and report access.

JSON-over-HTTP with pydantic request/response models; also hosts the review
console's static bundle when one is built. All scoring math happens in the
core modules; endpoints only read artifacts, append verdicts, and recompute
reports from the current verdict state (read-your-writes).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import grids
from .co_eval import (
    RATER_EXPERT,
    RATER_LITERATURE,
    VERDICTS,
    LiteratureEvidence,
    score_pattern,
)
from .errors import GazelabError, ValidationError
from .pipeline import MissingArtifactError, compute_kappa_report
from .store import RunStore, StoreError, read_json, read_jsonl, utc_now, write_jsonl


class ApiError(BaseModel):
    code: str  # not_found | validation | conflict | internal
    message: str
    detail: dict = Field(default_factory=dict)


class RunSummary(BaseModel):
    run_id: str
    seed: int
    created_at: str
    stages: dict


class EvidenceModel(BaseModel):
    pattern_id: str
    rank: int
    quartile: str
    stance: int


class PatternListItem(BaseModel):
    id: str
    text: str
    stage: str
    prompt_level: str
    model_id: str
    frequency_class: Optional[str] = None
    expert_verdict: Optional[str] = None
    literature_verdict: Optional[str] = None


class PatternDetail(PatternListItem):
    run_id: str
    evidence: list[EvidenceModel] = Field(default_factory=list)
    components: list[float] = Field(default_factory=list)
    total: Optional[float] = None


class VerdictRequest(BaseModel):
    verdict: str
    rater: str = RATER_EXPERT
    note: Optional[str] = None
    run_id: Optional[str] = None


class VerdictResult(BaseModel):
    pattern_id: str
    run_id: str
    rater: str
    verdict: str
    appended: bool  # False when the identical verdict was already recorded


class EvidenceSubmission(BaseModel):
    pattern_id: str
    records: list[EvidenceModel]


class EvidenceResult(BaseModel):
    pattern_id: str
    run_id: str
    components: list[float]
    total: float
    literature_verdict: str


class KappaCell(BaseModel):
    stage: str
    prompt_level: str
    model_id: str
    kappa: Optional[float] = None
    consistent: Optional[bool] = None
    items: int


class KappaResponse(BaseModel):
    run_id: str
    overall: Optional[dict] = None
    overall_items: int
    composite: Optional[dict] = None
    composite_items: int
    direct: Optional[dict] = None
    direct_items: int
    cells: list[KappaCell]
    grid: dict


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content=ApiError(code=code, message=message).model_dump())


def create_app(store_root, ui_dir: Optional[str] = None) -> FastAPI:
    store = RunStore(store_root)
    app = FastAPI(title="gazelab service", version="0.1.0")

    @app.exception_handler(MissingArtifactError)
    async def _missing(request: Request, exc: MissingArtifactError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(StoreError)
    async def _store_error(request: Request, exc: StoreError):
        if "missing artifact" in str(exc):
            return _error(404, "not_found", str(exc))
        return _error(500, "internal", str(exc))

    @app.exception_handler(ValidationError)
    async def _validation(request: Request, exc: ValidationError):
        return _error(422, "validation", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _request_validation(request: Request, exc: RequestValidationError):
        return _error(422, "validation", str(exc))

    @app.exception_handler(GazelabError)
    async def _internal(request: Request, exc: GazelabError):
        return _error(500, "internal", str(exc))

    def _manifest_or_404(run_id: str) -> dict:
        if not (store.run_dir(run_id) / "manifest.json").exists():
            raise MissingArtifactError(store.run_dir(run_id) / "manifest.json")
        return store.manifest(run_id)

    def _composite(run_id: str) -> list[dict]:
        path = store.composite_path(run_id)
        if not path.exists():
            raise MissingArtifactError(path, "mine")
        return read_jsonl(path)

    def _find_pattern(pid: str, run_id: Optional[str]) -> tuple[str, dict]:
        run_ids = [run_id] if run_id else store.list_runs()
        for rid in run_ids:
            path = store.composite_path(rid)
            if not path.exists():
                continue
            for rec in read_jsonl(path):
                if rec["id"] == pid:
                    return rid, rec
            patterns_dir = store.patterns_dir(rid)
            if patterns_dir.exists():
                for file in sorted(patterns_dir.glob("*.jsonl")):
                    for rec in read_jsonl(file):
                        if rec["id"] == pid:
                            return rid, rec
        raise MissingArtifactError(f"pattern {pid}")

    @app.get("/runs", response_model=list[RunSummary])
    def list_runs():
        out = []
        for rid in store.list_runs():
            m = store.manifest(rid)
            out.append(RunSummary(run_id=rid, seed=m["seed"], created_at=m["created_at"],
                                  stages=m["stages"]))
        return out

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return _manifest_or_404(run_id)

    @app.get("/runs/{run_id}/patterns", response_model=list[PatternListItem])
    def run_patterns(run_id: str, status: Optional[str] = Query(default=None)):
        _manifest_or_404(run_id)
        verdicts = store.verdict_map(run_id)
        items = []
        for rec in _composite(run_id):
            expert = verdicts.get((rec["id"], "expert"))
            literature = verdicts.get((rec["id"], "literature"))
            item = PatternListItem(
                id=rec["id"], text=rec["text"], stage=rec["stage"],
                prompt_level=rec["prompt_level"], model_id=rec["model_id"],
                frequency_class=rec.get("frequency_class"),
                expert_verdict=expert, literature_verdict=literature,
            )
            if status == "pending" and expert is not None:
                continue
            if status == "reviewed" and expert is None:
                continue
            items.append(item)
        return items

    @app.get("/patterns/{pid}", response_model=PatternDetail)
    def pattern_detail(pid: str, run_id: Optional[str] = Query(default=None)):
        rid, rec = _find_pattern(pid, run_id)
        verdicts = store.verdict_map(rid)
        evidence = []
        ev_path = store.evidence_path(rid)
        if ev_path.exists():
            evidence = [EvidenceModel(**e) for e in read_jsonl(ev_path) if e["pattern_id"] == pid]
        components: list[float] = []
        total = None
        scores_path = store.scores_path(rid)
        if scores_path.exists():
            for s in read_jsonl(scores_path):
                if s["pattern_id"] == pid:
                    components = s["components"]
                    total = s["total"]
                    break
        return PatternDetail(
            run_id=rid, id=rec["id"], text=rec["text"], stage=rec["stage"],
            prompt_level=rec["prompt_level"], model_id=rec["model_id"],
            frequency_class=rec.get("frequency_class"),
            expert_verdict=verdicts.get((pid, "expert")),
            literature_verdict=verdicts.get((pid, "literature")),
            evidence=evidence, components=components, total=total,
        )

    @app.post("/patterns/{pid}/verdict", response_model=VerdictResult)
    def post_verdict(pid: str, body: VerdictRequest):
        if body.verdict not in VERDICTS:
            raise ValidationError(f"verdict must be one of {VERDICTS}, got {body.verdict!r}")
        rid, _ = _find_pattern(pid, body.run_id)
        record = {
            "pattern_id": pid,
            "rater": body.rater,
            "verdict": body.verdict,
            "timestamp": utc_now(),
        }
        if body.note is not None:
            record["note"] = body.note
        appended = store.append_verdict(rid, record)
        return VerdictResult(pattern_id=pid, run_id=rid, rater=body.rater,
                             verdict=body.verdict, appended=appended)

    @app.post("/runs/{run_id}/evidence", response_model=EvidenceResult)
    def post_evidence(run_id: str, body: EvidenceSubmission):
        """Replace a pattern's literature evidence, rescore it, and record the
        resulting literature verdict (audit-trailed like any verdict)."""
        _manifest_or_404(run_id)
        evidence = [
            LiteratureEvidence(
                pattern_id=body.pattern_id, rank=e.rank, quartile=e.quartile, stance=e.stance
            )
            for e in body.records
        ]
        score = score_pattern(evidence)

        ev_path = store.evidence_path(run_id)
        existing = [
            rec for rec in (read_jsonl(ev_path) if ev_path.exists() else [])
            if rec["pattern_id"] != body.pattern_id
        ]
        existing.extend(
            {"pattern_id": body.pattern_id, "rank": e.rank, "quartile": e.quartile,
             "stance": e.stance}
            for e in sorted(evidence, key=lambda e: e.rank)
        )
        write_jsonl(ev_path, existing)

        scores_path = store.scores_path(run_id)
        scores = [
            rec for rec in (read_jsonl(scores_path) if scores_path.exists() else [])
            if rec["pattern_id"] != body.pattern_id
        ]
        scores.append(
            {"pattern_id": score.pattern_id, "components": score.components,
             "total": score.total, "literature_verdict": score.literature_verdict,
             "tie": score.tie}
        )
        write_jsonl(scores_path, scores)

        store.append_verdict(
            run_id,
            {"pattern_id": body.pattern_id, "rater": RATER_LITERATURE,
             "verdict": score.literature_verdict, "timestamp": utc_now()},
        )
        return EvidenceResult(
            pattern_id=body.pattern_id, run_id=run_id,
            components=[float(c) for c in score.components],
            total=float(score.total), literature_verdict=score.literature_verdict,
        )

    @app.get("/runs/{run_id}/reports/kappa", response_model=KappaResponse)
    def kappa_report(run_id: str):
        _manifest_or_404(run_id)
        data = compute_kappa_report(store, run_id)

        class _Cell:
            def __init__(self, rec):
                self.stage = rec["stage"]
                self.prompt_level = rec["prompt_level"]
                self.model_id = rec["model_id"]
                kappa = rec["kappa"]
                self.report = None if kappa is None else type("R", (), {"kappa": kappa})()

        grid = grids.consistency_grid(_Cell(rec) for rec in data["cells"])
        return KappaResponse(run_id=run_id, grid=grid.to_dict(),
                             cells=[KappaCell(**c) for c in data["cells"]],
                             **{k: data[k] for k in (
                                 "overall", "overall_items", "composite",
                                 "composite_items", "direct", "direct_items")})

    @app.get("/runs/{run_id}/reports/anomalies")
    def anomalies_report(run_id: str):
        _manifest_or_404(run_id)
        path = store.reports_dir(run_id) / "anomalies.json"
        if not path.exists():
            raise MissingArtifactError(path, "detect")
        return read_json(path)

    @app.get("/runs/{run_id}/reports/difficulty")
    def difficulty_report(run_id: str):
        _manifest_or_404(run_id)
        path = store.reports_dir(run_id) / "difficulty.json"
        if not path.exists():
            raise MissingArtifactError(path, "predict-difficulty")
        return read_json(path)

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.get("/")
    def root():
        return {"service": "gazelab", "runs": store.list_runs()}

    return app
