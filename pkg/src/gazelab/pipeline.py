"""End-to-end pipeline stages, each reading and writing run-store artifacts.

The CLI and the HTTP service are thin shells over these functions. Every
stage validates that the artifacts it needs exist and fails with the missing
path, so partial pipelines abort early and reproducibly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import co_eval, difficulty, grids, pattern_miner, synthetic
from .anomaly import (
    AnomalyReport,
    WindowResult,
    build_windows,
    calibrate_threshold,
    detect,
    fit_normalizer,
    summarize_for_llm,
    summary_payload,
)
from .canonical import canonical_json
from .config import (
    cleaning_from,
    columns_from,
    default_aoi_from,
    hyperparams_from,
    model_spec_from,
    questions_from,
    roles_from,
)
from .errors import GazelabError, ValidationError
from .gaze_data import (
    GazeTable,
    annotate_aoi,
    clean,
    emit_csv,
    load_aoi_definitions,
    parse_gaze_csv,
    sessionize,
)
from .llm_gateway import Gateway, RunLog, parse_patterns
from .lstm import LstmModel, reconstruction_error, train
from .patterns import BehavioralPattern
from .segmentation import TemplateSet, build_bundle, split_horizontal, split_vertical
from .store import RunStore, read_json, read_jsonl, write_json, write_jsonl
from .synthetic import subseed

SENTINEL_TIMESTAMP = "1970-01-01T00:00:00Z"

DIFFICULTY_SETTINGS = (
    ("Directly", "total"),
    ("HV", "total"),
    ("H", "total"),
    ("V", "total"),
    ("HV", "none"),
    ("H", "none"),
    ("V", "none"),
)


class MissingArtifactError(GazelabError):
    """A pipeline stage ran before its inputs existed."""

    def __init__(self, path, stage_hint: str = ""):
        hint = f" (run `{stage_hint}` first)" if stage_hint else ""
        super().__init__(f"missing artifact: {path}{hint}")
        self.path = str(path)


def _require(path: Path, stage_hint: str = "") -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(path, stage_hint)
    return Path(path)


def _templates(config: dict) -> TemplateSet:
    return TemplateSet.load(config["segmentation"].get("templates_dir"))


def _gateway(store: RunStore, run_id: str, seed: int) -> Gateway:
    log_path = store.log_path(run_id)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    return Gateway(seed=seed, run_log=RunLog(log_path), sleep=lambda s: None)


def load_table(store: RunStore, run_id: str) -> GazeTable:
    schema = read_json(_require(store.table_schema_path(run_id), "ingest"))
    csv_path = _require(store.table_path(run_id), "ingest")
    table = parse_gaze_csv(csv_path.read_text("utf-8"), [tuple(c) for c in schema["columns"]])
    return table


# --- ingest -------------------------------------------------------------------


def run_ingest(
    store: RunStore,
    run_id: str,
    config: dict,
    seed: int,
    source: Optional[Path] = None,
    use_synthetic: bool = False,
) -> dict:
    """Parse, clean, and AOI-annotate the gaze export; persist the table.

    With ``use_synthetic`` the packaged generator produces the export and its
    AOI definitions; otherwise ``source`` plus the configured AOI file are
    read. Returns the cleaning report as a dict.
    """
    store.create_run(run_id, config, seed)
    store.set_stage(run_id, "ingest", "running")

    question_ids = [q["question_id"] for q in questions_from(config)]
    if use_synthetic:
        syn = config["data"]["synthetic"]
        export = synthetic.make_gaze_export(
            seed,
            n_experts=syn["n_experts"],
            n_students=syn["n_students"],
            sequence_length=syn["sequence_length"],
        )
        raw_text = export.csv_text
        aois = export.aois
        write_json(
            store.run_dir(run_id) / "synthetic_manifest.json", export.manifest, lossless=True
        )
    else:
        if source is None:
            raise ValidationError("ingest needs --input FILE or --synthetic")
        raw_text = Path(source).read_text("utf-8")
        aoi_file = config["data"].get("aoi_file")
        if aoi_file:
            aois = load_aoi_definitions(json.loads(Path(aoi_file).read_text("utf-8")))
        else:
            aois = []

    roles = roles_from(config)
    table = parse_gaze_csv(raw_text, columns_from(config))
    cleaned, report = clean(table, cleaning_from(config, question_ids), roles)
    annotated = annotate_aoi(cleaned, aois, default_aoi_from(config), roles)

    store.table_path(run_id).write_text(emit_csv(annotated), encoding="utf-8")
    write_json(
        store.table_schema_path(run_id),
        {"columns": [[c.name, c.kind] for c in annotated.columns],
         "delimiter": annotated.provenance.get("delimiter", ",")},
        lossless=True,
    )
    write_json(store.clean_report_path(run_id), report.__dict__, lossless=True)
    write_json(
        store.aoi_path(run_id),
        [
            {"name": a.name, "question_id": a.question_id, "rect": list(a.rect),
             "category": a.category}
            for a in aois
        ],
        lossless=True,
    )
    store.set_stage(run_id, "ingest", "done")
    return report.__dict__


# --- segment ------------------------------------------------------------------


def _mining_view(table: GazeTable, config: dict) -> GazeTable:
    """The bounded per-sequence slice of the table that feeds LLM stages.

    Detection always sees the full sequences; prompts see at most
    ``mining.max_rows_per_sequence`` rows per (participant, question) so
    column-pair payloads stay inside the chunk budget.
    """
    cap = config["mining"].get("max_rows_per_sequence")
    if not cap:
        return table
    roles = roles_from(config)
    kept = []
    counts: dict[tuple, int] = {}
    for row in table.rows:
        key = (row.get(roles.participant), row.get(roles.question))
        if counts.get(key, 0) < cap:
            counts[key] = counts.get(key, 0) + 1
            kept.append(row)
    return GazeTable(columns=list(table.columns), rows=kept, provenance=dict(table.provenance))


def run_segment(store: RunStore, run_id: str, config: dict) -> dict:
    store.set_stage(run_id, "segment", "running")
    table = _mining_view(load_table(store, run_id), config)
    horizontal = [p.serialize() for p in split_horizontal(table)]
    vertical = [p.serialize() for p in split_vertical(table)]
    seg_dir = store.segments_dir(run_id)
    seg_dir.mkdir(parents=True, exist_ok=True)
    (seg_dir / "horizontal.jsonl").write_text("\n".join(horizontal) + "\n", encoding="utf-8")
    (seg_dir / "vertical.jsonl").write_text("\n".join(vertical) + "\n", encoding="utf-8")
    store.set_stage(run_id, "segment", "done")
    return {"horizontal": len(horizontal), "vertical": len(vertical)}


def _segment_payloads(store: RunStore, run_id: str, name: str) -> list[str]:
    path = _require(store.segments_dir(run_id) / f"{name}.jsonl", "segment")
    return [line for line in path.read_text("utf-8").splitlines() if line]


# --- mine ---------------------------------------------------------------------


def run_mine(
    store: RunStore,
    run_id: str,
    config: dict,
    seed: int,
    force_mock: bool = False,
) -> dict:
    """Run the mining grid, classify cross-model frequency, draw the composite.

    The no-module baseline runs once per model (prompt level fixed to
    detailed); segmented stages run at every configured prompt level.
    """
    _require(store.segments_dir(run_id) / "horizontal.jsonl", "segment")
    store.set_stage(run_id, "mine", "running")

    table = _mining_view(load_table(store, run_id), config)
    templates = _templates(config)
    budget = config["segmentation"]["chunk_budget_chars"]
    gateway = _gateway(store, run_id, seed)
    mining = config["mining"]
    specs = [model_spec_from(config, m, force_mock) for m in mining["models"]]

    patterns_dir = store.patterns_dir(run_id)
    patterns_dir.mkdir(parents=True, exist_ok=True)

    cell_sets: dict[tuple[str, str], list[pattern_miner.PatternSet]] = {}
    counts = {}
    for stage in mining["stages"]:
        levels = ["detailed"] if stage == "direct" else mining["prompt_levels"]
        for level in levels:
            for spec in specs:
                cell = pattern_miner.mine_cell(
                    table, stage, level, spec, gateway, templates,
                    n_runs=mining["n_runs"], budget=budget,
                )
                deduped = pattern_miner.dedupe(cell)
                write_jsonl(
                    patterns_dir / f"{stage}_{level}_{spec.model_id}.jsonl",
                    [p.to_dict() for p in deduped.patterns],
                )
                cell_sets.setdefault((stage, level), []).append(deduped)
                counts[f"{stage}/{level}/{spec.model_id}"] = len(deduped.patterns)

    labeled_all: list[BehavioralPattern] = []
    composite: list[BehavioralPattern] = []
    seen_composite = set()
    for (stage, level), sets in sorted(cell_sets.items()):
        if len(sets) < 2:
            continue
        labeled = pattern_miner.classify_frequency(sets)
        labeled_all.extend(labeled)
        sample = pattern_miner.sample_composite(labeled, subseed(seed, stage, level))
        for p in sample.patterns:
            if p.id not in seen_composite:
                seen_composite.add(p.id)
                composite.append(p)

    write_jsonl(store.labeled_path(run_id), [p.to_dict() for p in labeled_all])
    write_jsonl(store.composite_path(run_id), [p.to_dict() for p in composite])

    inductive_model = mining.get("inductive_model")
    if inductive_model:
        spec = model_spec_from(config, inductive_model, force_mock)
        bundle = build_bundle(
            [canonical_json(p.to_dict()) for p in labeled_all],
            "inductive", "detailed", templates, budget=budget,
        )
        responses = gateway.run_repeated(bundle, spec, 1)
        write_jsonl(
            store.run_dir(run_id) / "inductive.jsonl",
            [{"model_id": r.model_id, "digest": r.request_digest, "text": r.text}
             for r in responses],
        )

    store.set_stage(run_id, "mine", "done")
    return {"cells": counts, "labeled": len(labeled_all), "composite": len(composite)}


def _all_pattern_ids(store: RunStore, run_id: str) -> list[str]:
    ids = []
    seen = set()
    for path in sorted(store.patterns_dir(run_id).glob("*.jsonl")):
        for rec in read_jsonl(path):
            if rec["id"] not in seen:
                seen.add(rec["id"])
                ids.append(rec["id"])
    for rec in read_jsonl(store.composite_path(run_id)):
        if rec["id"] not in seen:
            seen.add(rec["id"])
            ids.append(rec["id"])
    return ids


# --- score ----------------------------------------------------------------------


def run_score(
    store: RunStore,
    run_id: str,
    config: dict,
    seed: int,
    evidence_file: Optional[Path] = None,
    expert_file: Optional[Path] = None,
    skip_expert: bool = False,
) -> dict:
    """Score literature evidence into verdicts and record expert verdicts.

    Evidence and expert verdicts come from files when supplied; otherwise the
    deterministic synthetic stand-ins generate them (desk-scale mode).
    ``skip_expert`` leaves the expert side empty so patterns stay pending for
    review through the service.
    """
    _require(store.composite_path(run_id), "mine")
    store.set_stage(run_id, "score", "running")
    pattern_ids = _all_pattern_ids(store, run_id)

    if evidence_file:
        evidence_records = read_jsonl(Path(evidence_file))
    else:
        evidence_records = []
        for pid in pattern_ids:
            evidence_records.extend(synthetic.synthetic_evidence(pid, seed))
    write_jsonl(store.evidence_path(run_id), evidence_records)

    by_pattern: dict[str, list[co_eval.LiteratureEvidence]] = {}
    for rec in evidence_records:
        by_pattern.setdefault(rec["pattern_id"], []).append(
            co_eval.LiteratureEvidence(
                pattern_id=rec["pattern_id"],
                rank=rec["rank"],
                quartile=rec["quartile"],
                stance=rec["stance"],
            )
        )

    scores = []
    for pid in pattern_ids:
        evidence = by_pattern.get(pid)
        if not evidence:
            continue
        score = co_eval.score_pattern(evidence)
        scores.append(score)
    write_jsonl(
        store.scores_path(run_id),
        [
            {
                "pattern_id": s.pattern_id,
                "components": s.components,
                "total": s.total,
                "literature_verdict": s.literature_verdict,
                "tie": s.tie,
            }
            for s in scores
        ],
    )

    for s in scores:
        store.append_verdict(
            run_id,
            {
                "pattern_id": s.pattern_id,
                "rater": co_eval.RATER_LITERATURE,
                "verdict": s.literature_verdict,
                "timestamp": SENTINEL_TIMESTAMP,
            },
        )

    if skip_expert:
        pass
    elif expert_file:
        for rec in read_jsonl(Path(expert_file)):
            store.append_verdict(run_id, rec)
    else:
        agree = config["scoring"]["expert_agree_rate"]
        for s in scores:
            verdict = synthetic.synthetic_expert_verdict(
                s.pattern_id, s.literature_verdict, seed, agree
            )
            store.append_verdict(
                run_id,
                {
                    "pattern_id": s.pattern_id,
                    "rater": co_eval.RATER_EXPERT,
                    "verdict": verdict,
                    "timestamp": SENTINEL_TIMESTAMP,
                },
            )

    store.set_stage(run_id, "score", "done")
    return {"patterns_scored": len(scores)}


# --- kappa ----------------------------------------------------------------------


def compute_kappa_report(store: RunStore, run_id: str) -> dict:
    """Assemble the kappa report dict from persisted patterns and verdicts."""
    verdicts = store.verdict_map(run_id)
    if not verdicts:
        raise MissingArtifactError(store.verdicts_path(run_id), "score (or submit verdicts)")

    cells: dict[tuple[str, str, str], list[str]] = {}
    for path in sorted(store.patterns_dir(run_id).glob("*.jsonl")):
        stem = path.stem
        parts = stem.split("_")
        if len(parts) < 3:
            continue
        stage = parts[0]
        model_id = parts[-1]
        level = "_".join(parts[1:-1])
        cells[(stage, level, model_id)] = [rec["id"] for rec in read_jsonl(path)]

    cell_results = co_eval.cell_kappas(cells, verdicts)

    def _overall(ids):
        expert, literature, used = co_eval.paired_verdicts(ids, verdicts)
        if not used:
            return None, 0
        return co_eval.cohen_kappa(expert, literature).to_dict(), len(used)

    composite_ids = [rec["id"] for rec in read_jsonl(store.composite_path(run_id))]
    all_ids = _all_pattern_ids(store, run_id)
    direct_ids = []
    for (stage, level, model), ids in cells.items():
        if stage == "direct":
            direct_ids.extend(ids)

    overall, n_overall = _overall(all_ids)
    composite_report, n_composite = _overall(composite_ids)
    direct_report, n_direct = _overall(list(dict.fromkeys(direct_ids)))

    return {
        "overall": overall,
        "overall_items": n_overall,
        "composite": composite_report,
        "composite_items": n_composite,
        "direct": direct_report,
        "direct_items": n_direct,
        "cells": [
            {
                "stage": c.stage,
                "prompt_level": c.prompt_level,
                "model_id": c.model_id,
                "kappa": None if c.report is None else c.report.kappa,
                "consistent": None if c.report is None else c.report.consistent,
                "items": c.items,
            }
            for c in cell_results
        ],
    }


def run_kappa(store: RunStore, run_id: str, config: dict) -> dict:
    store.set_stage(run_id, "kappa", "running")
    report = compute_kappa_report(store, run_id)
    reports_dir = store.reports_dir(run_id)
    write_json(reports_dir / "kappa.json", report)
    rendered = render_consistency_grid(store, run_id)
    (reports_dir / "consistency_grid.tsv").write_text(rendered, encoding="utf-8")
    store.set_stage(run_id, "kappa", "done")
    return report


def render_consistency_grid(store: RunStore, run_id: str) -> str:
    """Render the grid from the persisted kappa report (so re-rendering is
    byte-identical by construction)."""
    data = read_json(_require(store.reports_dir(run_id) / "kappa.json", "kappa"))

    class _Cell:
        def __init__(self, rec):
            self.stage = rec["stage"]
            self.prompt_level = rec["prompt_level"]
            self.model_id = rec["model_id"]
            kappa = rec["kappa"]
            self.report = None if kappa is None else type("R", (), {"kappa": kappa})()

    grid = grids.consistency_grid(_Cell(rec) for rec in data["cells"])
    return grid.render_tsv()


# --- detect ----------------------------------------------------------------------


def run_detect(
    store: RunStore,
    run_id: str,
    config: dict,
    seed: int,
    inject_spikes: bool = False,
) -> dict:
    """Train the expert model, calibrate the threshold, score student windows.

    ``inject_spikes`` plants synthetic spike bursts in the student windows
    (concentrated on B1 and D2 for the second student) so demo runs produce a
    non-trivial anomaly distribution; detection itself is unchanged.
    """
    store.set_stage(run_id, "detect", "running")
    table = load_table(store, run_id)
    roles = roles_from(config)
    sessions = sessionize(table, roles)

    lstm_cfg = config["lstm"]
    window_len, stride = lstm_cfg["window_len"], lstm_cfg["stride"]
    expert_sessions = {k: s for k, s in sessions.items() if s.expertise == "expert"}
    student_sessions = {k: s for k, s in sessions.items() if s.expertise != "expert"}
    if not expert_sessions:
        raise ValidationError("no expert sessions in the table; cannot train")
    if not student_sessions:
        raise ValidationError("no student sessions in the table; nothing to score")

    expert_windows = build_windows(expert_sessions, window_len, stride)
    student_windows = build_windows(student_sessions, window_len, stride)
    if not expert_windows:
        raise ValidationError("expert sessions are shorter than one window")

    normalizer = fit_normalizer(expert_windows)

    injected: list[int] = []
    if inject_spikes and student_windows:
        students = sorted({w.participant_id for w in student_windows})
        target = students[-1]
        placement = {(target, "B1"): 0.45, (target, "D2"): 0.45}
        if len(students) > 1:
            placement[(students[0], "A3")] = 0.10
        injected = synthetic.inject_window_spikes(
            student_windows, 0.05, subseed(seed, "spikes"), placement, normalizer.std
        )

    expert_normed = normalizer.apply_all(expert_windows)
    student_normed = normalizer.apply_all(student_windows)

    # Hold out trailing experts for threshold calibration: their errors carry
    # the participant-level generalization spread that in-sample errors hide.
    expert_ids = sorted({w.participant_id for w in expert_normed})
    n_holdout = min(lstm_cfg.get("calibration_holdouts", 2), len(expert_ids) - 1)
    holdout_ids = set(expert_ids[len(expert_ids) - n_holdout:]) if n_holdout > 0 else set()
    fit_windows = [w for w in expert_normed if w.participant_id not in holdout_ids]
    cal_windows = [w for w in expert_normed if w.participant_id in holdout_ids] or fit_windows

    x = np.stack([w.features for w in fit_windows])
    hyper = hyperparams_from(config, subseed(seed, "lstm"))
    model = train(x, hyper, normalizer.mean, normalizer.std)

    training_errors = [reconstruction_error(model, w.features) for w in cal_windows]
    threshold = calibrate_threshold(training_errors, lstm_cfg["threshold_k"])

    question_levels = {q["question_id"]: q["level"] for q in questions_from(config)}
    report = detect(model, threshold, student_normed, question_levels)

    write_json(store.model_path(run_id), model.to_dict(), lossless=True)
    reports_dir = store.reports_dir(run_id)
    write_json(reports_dir / "anomalies.json", report.to_dict())
    write_jsonl(reports_dir / "anomaly_detail.jsonl", [r.to_dict() for r in report.results])
    if injected:
        write_json(reports_dir / "injected_windows.json", {"indices": injected}, lossless=True)

    templates = _templates(config)
    bundle = summarize_for_llm(report, templates)
    (reports_dir / "anomaly_prompt.txt").write_text(bundle.payload_chunks[0], encoding="utf-8")

    if lstm_cfg.get("analyze_with_llm"):
        gateway = _gateway(store, run_id, seed)
        spec = model_spec_from(config, lstm_cfg["analysis_model"], force_mock=True)
        resp = gateway.complete(bundle.payload_chunks[0], spec)
        analysis = parse_patterns(resp, "HV", "detailed")
        write_jsonl(reports_dir / "anomaly_patterns.jsonl", [p.to_dict() for p in analysis])

    store.set_stage(run_id, "detect", "done")
    return {
        "expert_windows": len(expert_windows),
        "student_windows": len(student_windows),
        "threshold": threshold,
        "flagged": report.flagged_count(),
        "double_zero": report.double_zero,
        "final_loss": model.loss_history[-1] if model.loss_history else None,
    }


def load_model(store: RunStore, run_id: str) -> LstmModel:
    return LstmModel.from_dict(read_json(_require(store.model_path(run_id), "detect")))


def load_anomaly_report(store: RunStore, run_id: str) -> AnomalyReport:
    data = read_json(_require(store.reports_dir(run_id) / "anomalies.json", "detect"))
    detail_path = store.reports_dir(run_id) / "anomaly_detail.jsonl"
    results = []
    if detail_path.exists():
        results = [WindowResult(**rec) for rec in read_jsonl(detail_path)]
    return AnomalyReport.from_dict(data, results)


# --- difficulty -------------------------------------------------------------------


def run_difficulty(
    store: RunStore,
    run_id: str,
    config: dict,
    seed: int,
    force_mock: bool = False,
) -> dict:
    store.set_stage(run_id, "difficulty", "running")
    templates = _templates(config)
    items = difficulty.load_questions(questions_from(config))

    h_payloads = _segment_payloads(store, run_id, "horizontal")
    v_payloads = _segment_payloads(store, run_id, "vertical")
    max_h = config["difficulty"]["max_h_payloads"]
    h_payloads = h_payloads[:max_h]

    roles = roles_from(config)
    v_payloads = [
        p for p in v_payloads if json.loads(p)["id_column"] == roles.question
    ]

    gateway = _gateway(store, run_id, seed)
    specs = [model_spec_from(config, m, force_mock) for m in config["difficulty"]["models"]]
    grid, runs = difficulty.run_and_score(
        items,
        DIFFICULTY_SETTINGS,
        specs,
        gateway,
        templates,
        seed=seed,
        repetitions=config["difficulty"]["repetitions"],
        h_payloads=h_payloads,
        v_payloads=v_payloads,
    )

    reports_dir = store.reports_dir(run_id)
    write_json(reports_dir / "difficulty.json", grid.to_dict())
    write_jsonl(reports_dir / "difficulty_runs.jsonl", [r.to_dict() for r in runs])
    rendered = render_difficulty_grid(store, run_id)
    (reports_dir / "difficulty_grid.tsv").write_text(rendered, encoding="utf-8")
    store.set_stage(run_id, "difficulty", "done")
    return grid.to_dict()


def render_difficulty_grid(store: RunStore, run_id: str) -> str:
    data = read_json(_require(store.reports_dir(run_id) / "difficulty.json", "predict-difficulty"))
    return grids.ExperimentGrid.from_dict(data).render_tsv()


# --- report -------------------------------------------------------------------------


def run_report(store: RunStore, run_id: str, config: dict) -> dict:
    """Re-render every derived report from its persisted source of truth."""
    produced = {}
    reports_dir = store.reports_dir(run_id)
    if (reports_dir / "kappa.json").exists():
        (reports_dir / "consistency_grid.tsv").write_text(
            render_consistency_grid(store, run_id), encoding="utf-8"
        )
        produced["consistency_grid.tsv"] = True
    if (reports_dir / "difficulty.json").exists():
        (reports_dir / "difficulty_grid.tsv").write_text(
            render_difficulty_grid(store, run_id), encoding="utf-8"
        )
        produced["difficulty_grid.tsv"] = True
    if (reports_dir / "anomalies.json").exists():
        report = load_anomaly_report(store, run_id)
        write_json(reports_dir / "anomaly_summary.json", summary_payload(report))
        produced["anomaly_summary.json"] = True
    if not produced:
        raise MissingArtifactError(reports_dir, "kappa / detect / predict-difficulty")
    store.set_stage(run_id, "report", "done")
    return produced
