"""Command-line entry point; a thin shell over the pipeline functions.

Exit codes: 0 success, 2 usage errors (argparse), 3 stage preconditions or
bad configuration (the message names the missing artifact), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError, GazelabError, ValidationError
from .pipeline import (
    MissingArtifactError,
    run_detect,
    run_difficulty,
    run_ingest,
    run_kappa,
    run_mine,
    run_report,
    run_score,
    run_segment,
)
from .store import RunStore, StoreError, make_run_id


def _add_common(parser):
    parser.add_argument("--config", help="path to the JSON config file")
    parser.add_argument("--run-id", help="run identifier (default: timestamp + seed digest)")
    parser.add_argument("--seed", type=int, help="master seed for this run")
    parser.add_argument("--store", help="run store directory (default from config)")
    parser.add_argument("--provider", choices=["mock", "config"], default="config",
                        help="force the mock provider or use configured kinds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazelab",
        description="Gaze analysis pipeline: segmentation, pattern mining, "
                    "co-scoring, anomaly detection, difficulty prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, clean, and AOI-annotate a gaze export")
    _add_common(p)
    p.add_argument("--input", help="delimited gaze export file")
    p.add_argument("--synthetic", action="store_true", help="generate a synthetic export")

    p = sub.add_parser("segment", help="write horizontal and vertical payloads")
    _add_common(p)

    p = sub.add_parser("mine", help="run the pattern-mining grid")
    _add_common(p)

    p = sub.add_parser("score", help="score evidence and record verdicts")
    _add_common(p)
    p.add_argument("--evidence", help="literature evidence .jsonl (default: synthetic)")
    p.add_argument("--expert",
                   help="expert verdicts .jsonl, or 'none' to leave patterns pending "
                        "(default: synthetic)")

    p = sub.add_parser("kappa", help="compute consistency reports")
    _add_common(p)

    p = sub.add_parser("detect", help="train the expert model and flag anomalies")
    _add_common(p)
    p.add_argument("--inject-spikes", action="store_true",
                   help="plant demo spike bursts in student windows")

    p = sub.add_parser("predict-difficulty", help="run the difficulty-prediction grid")
    _add_common(p)

    p = sub.add_parser("report", help="re-render reports from persisted artifacts")
    _add_common(p)

    p = sub.add_parser("serve", help="start the HTTP service and review UI host")
    _add_common(p)
    p.add_argument("--host")
    p.add_argument("--port", type=int)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        seed = args.seed if args.seed is not None else config["seed"]
        store = RunStore(args.store or config["store_dir"])
        run_id = args.run_id or make_run_id(seed)
        force_mock = args.provider == "mock"

        if args.command == "ingest":
            result = run_ingest(
                store, run_id, config, seed,
                source=Path(args.input) if args.input else None,
                use_synthetic=args.synthetic,
            )
        elif args.command == "segment":
            result = run_segment(store, run_id, config)
        elif args.command == "mine":
            result = run_mine(store, run_id, config, seed, force_mock=force_mock)
        elif args.command == "score":
            result = run_score(
                store, run_id, config, seed,
                evidence_file=Path(args.evidence) if args.evidence else None,
                expert_file=Path(args.expert) if args.expert and args.expert != "none" else None,
                skip_expert=args.expert == "none",
            )
        elif args.command == "kappa":
            result = run_kappa(store, run_id, config)
        elif args.command == "detect":
            result = run_detect(store, run_id, config, seed, inject_spikes=args.inject_spikes)
        elif args.command == "predict-difficulty":
            result = run_difficulty(store, run_id, config, seed, force_mock=force_mock)
        elif args.command == "report":
            result = run_report(store, run_id, config)
        elif args.command == "serve":
            import uvicorn

            from .service import create_app

            app = create_app(store.root, ui_dir=config["service"].get("ui_dir"))
            uvicorn.run(
                app,
                host=args.host or config["service"]["host"],
                port=args.port or config["service"]["port"],
            )
            return 0
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command!r}")

        print(f"run {run_id}: {args.command} ok")
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
        return 0
    except (MissingArtifactError, ConfigurationError, ValidationError, StoreError) as exc:
        print(f"gazelab {args.command}: {exc}", file=sys.stderr)
        return 3
    except GazelabError as exc:
        print(f"gazelab {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
