"""Plain-file run store: one directory per run, JSON and .jsonl artifacts.

Everything is reloadable to an equal in-memory value, and corrupted files
fail with the file name, line number, and byte offset of the damage.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Iterable, Optional

from .canonical import canonical_json
from .errors import GazelabError


class StoreError(GazelabError):
    def __init__(self, message, path=None, line=None, offset=None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.offset = offset


def read_jsonl(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise StoreError(f"missing artifact: {path}", path=str(path))
    records = []
    offset = 0
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.decode("utf-8").strip()
            if text:
                try:
                    records.append(json.loads(text))
                except ValueError as exc:
                    raise StoreError(
                        f"{path}: line {line_no}: invalid JSON at byte offset "
                        f"{offset + getattr(exc, 'pos', 0)}: {exc}",
                        path=str(path),
                        line=line_no,
                        offset=offset + getattr(exc, "pos", 0),
                    )
            offset += len(raw)
    return records


def write_jsonl(path: Path, records: Iterable[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_json(record) + "\n")


def append_jsonl(path: Path, record: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(canonical_json(record) + "\n")


def read_json(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise StoreError(f"missing artifact: {path}", path=str(path))
    text = path.read_text("utf-8")
    try:
        return json.loads(text)
    except ValueError as exc:
        raise StoreError(
            f"{path}: invalid JSON at byte offset {getattr(exc, 'pos', 0)}: {exc}",
            path=str(path),
            offset=getattr(exc, "pos", 0),
        )


def write_json(path: Path, data, lossless: bool = False):
    """Write JSON deterministically. ``lossless`` keeps full float precision
    (model weights); the default canonical form trims floats to 6 significant
    digits (reports, payload-like artifacts)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if lossless:
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    else:
        text = canonical_json(data)
    path.write_text(text + "\n", encoding="utf-8")


def utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


class RunStore:
    """Filesystem layout and access for pipeline runs.

    runs/<run-id>/
        manifest.json                     run metadata and stage statuses
        table_clean.csv, table_schema.json, clean_report.json, aois.json
        segments/horizontal.jsonl, segments/vertical.jsonl
        patterns/<stage>_<level>_<model>.jsonl, labeled.jsonl
        composite.jsonl
        evidence.jsonl, scores.jsonl, verdicts.jsonl
        model/lstm.json
        reports/*.json, reports/*.tsv, reports/anomaly_detail.jsonl
        logs/gateway.jsonl
    """

    def __init__(self, root):
        self.root = Path(root)
        self._verdict_lock = threading.Lock()

    # -- run lifecycle --------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def list_runs(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "manifest.json").exists())

    def create_run(self, run_id: str, config: dict, seed: int) -> dict:
        run_dir = self.run_dir(run_id)
        manifest_path = run_dir / "manifest.json"
        if manifest_path.exists():
            return self.manifest(run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "run_id": run_id,
            "seed": seed,
            "created_at": utc_now(),
            "config": config,
            "stages": {},
            "history": [],
        }
        write_json(manifest_path, manifest, lossless=True)
        return manifest

    def manifest(self, run_id: str) -> dict:
        return read_json(self.run_dir(run_id) / "manifest.json")

    def set_stage(self, run_id: str, stage: str, status: str):
        manifest = self.manifest(run_id)
        manifest["stages"][stage] = status
        manifest["history"].append({"stage": stage, "status": status, "at": utc_now()})
        write_json(self.run_dir(run_id) / "manifest.json", manifest, lossless=True)

    # -- artifact paths -------------------------------------------------------

    def table_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "table_clean.csv"

    def table_schema_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "table_schema.json"

    def clean_report_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "clean_report.json"

    def aoi_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "aois.json"

    def segments_dir(self, run_id) -> Path:
        return self.run_dir(run_id) / "segments"

    def patterns_dir(self, run_id) -> Path:
        return self.run_dir(run_id) / "patterns"

    def labeled_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "labeled.jsonl"

    def composite_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "composite.jsonl"

    def evidence_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "evidence.jsonl"

    def scores_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "scores.jsonl"

    def verdicts_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "verdicts.jsonl"

    def model_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "model" / "lstm.json"

    def reports_dir(self, run_id) -> Path:
        return self.run_dir(run_id) / "reports"

    def log_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "logs" / "gateway.jsonl"

    # -- verdicts -------------------------------------------------------------

    def append_verdict(self, run_id: str, record: dict) -> bool:
        """Append a verdict; identical resubmissions are no-ops.

        A verdict is identical when the latest entry for its (pattern, rater)
        already carries the same verdict and note. Conflicting verdicts are
        appended, preserving the audit trail; the latest one wins in reports.
        """
        with self._verdict_lock:
            current = self.verdict_records(run_id, missing_ok=True)
            latest = None
            for rec in current:
                if rec["pattern_id"] == record["pattern_id"] and rec["rater"] == record["rater"]:
                    latest = rec
            if (
                latest is not None
                and latest["verdict"] == record["verdict"]
                and latest.get("note") == record.get("note")
            ):
                return False
            append_jsonl(self.verdicts_path(run_id), record)
            return True

    def verdict_records(self, run_id: str, missing_ok: bool = False) -> list[dict]:
        path = self.verdicts_path(run_id)
        if not path.exists():
            if missing_ok:
                return []
            raise StoreError(f"missing artifact: {path}", path=str(path))
        return read_jsonl(path)

    def verdict_map(self, run_id: str) -> dict:
        """Latest verdict per (pattern_id, rater)."""
        mapping: dict = {}
        for rec in self.verdict_records(run_id, missing_ok=True):
            mapping[(rec["pattern_id"], rec["rater"])] = rec["verdict"]
        return mapping


def make_run_id(seed: int, now: Optional[str] = None) -> str:
    """Timestamp plus a seed digest, so reproductions are self-describing."""
    from .canonical import digest

    stamp = now or time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    return f"{stamp}-{digest(str(seed))[:8]}"
