"""Configuration loading: file defaults, deep merge, typed accessors.

One JSON config file drives the whole pipeline; command-line flags override
file values, and secrets (provider API keys) come only from the environment
variables the config names.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .gaze_data import CleaningConfig, Column, ColumnRoles, DefaultAoi
from .llm_gateway import ModelSpec
from .lstm import Hyperparams

DEFAULT_CONFIG: dict = {
    "store_dir": "runs",
    "seed": 0,
    "data": {
        "columns": [
            ["participant_id", "id"],
            ["role", "categorical"],
            ["expertise", "categorical"],
            ["question_id", "id"],
            ["timestamp_ms", "numeric"],
            ["fixation_number", "numeric"],
            ["fixation_duration_ms", "numeric"],
            ["saccade_number", "numeric"],
            ["saccade_duration_ms", "numeric"],
            ["gaze_x", "numeric"],
            ["gaze_y", "numeric"],
        ],
        "roles": {},  # overrides for ColumnRoles fields
        "cleaning": {
            "min_fixation_ms": 50.0,
            "max_fixation_ms": 2000.0,
            "restrict_to_question_list": True,
        },
        "default_aoi": {"name": "question_stem", "category": "NonError"},
        "aoi_file": None,  # run dir aois.json when ingesting synthetic data
        "synthetic": {"n_experts": 4, "n_students": 2, "sequence_length": 48},
    },
    "segmentation": {"chunk_budget_chars": 12000, "templates_dir": None},
    "providers": {
        "gpt4o": {"kind": "mock", "endpoint": None, "auth_env": None},
        "o1": {"kind": "mock", "endpoint": None, "auth_env": None},
        "r1": {"kind": "mock", "endpoint": None, "auth_env": None},
        "mock": {"kind": "mock", "endpoint": None, "auth_env": None},
    },
    "mining": {
        "models": ["gpt4o", "o1", "r1"],
        "stages": ["direct", "H", "V", "HV"],
        "prompt_levels": ["detailed", "semi_detailed", "brief"],
        "n_runs": 10,
        "inductive_model": None,  # optional cross-model summarization pass
        # Rows per (participant, question) fed to the LLM stages; detection
        # always sees full sequences. Keeps column-pair payloads inside the
        # chunk budget on realistic tables.
        "max_rows_per_sequence": 5,
    },
    "scoring": {"expert_agree_rate": 0.85},
    "lstm": {
        "hidden_dim": 16,
        "window_len": 16,
        "stride": 16,
        "epochs": 500,
        "learning_rate": 2.0,
        "clip_norm": 5.0,
        "threshold_k": 3.0,
        "calibration_holdouts": 2,
        "analyze_with_llm": True,
        "analysis_model": "r1",
    },
    "difficulty": {
        "questions_file": None,  # packaged corpus when unset
        "repetitions": 5,
        "models": ["gpt4o", "o1", "r1"],
        "max_h_payloads": 24,
    },
    "service": {"host": "127.0.0.1", "port": 8000, "ui_dir": "frontend/dist"},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> dict:
    """Defaults, overlaid with the config file, overlaid with flag overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigurationError(f"config file not found: {file_path}")
        try:
            data = json.loads(file_path.read_text("utf-8"))
        except ValueError as exc:
            raise ConfigurationError(f"config file {file_path} is not valid JSON: {exc}")
        config = _deep_merge(config, data)
    if overrides:
        config = _deep_merge(config, overrides)
    return config


def columns_from(config: dict) -> list[Column]:
    return [Column(name, kind) for name, kind in config["data"]["columns"]]


def roles_from(config: dict) -> ColumnRoles:
    return ColumnRoles(**config["data"]["roles"])


def cleaning_from(config: dict, question_ids=None) -> CleaningConfig:
    section = config["data"]["cleaning"]
    restrict = section.get("restrict_to_question_list", True)
    return CleaningConfig(
        min_fixation_ms=section["min_fixation_ms"],
        max_fixation_ms=section["max_fixation_ms"],
        question_ids=tuple(question_ids) if (restrict and question_ids) else None,
    )


def default_aoi_from(config: dict) -> DefaultAoi:
    section = config["data"]["default_aoi"]
    return DefaultAoi(name=section["name"], category=section["category"])


def model_spec_from(config: dict, model_id: str, force_mock: bool = False) -> ModelSpec:
    providers = config["providers"]
    entry = providers.get(model_id)
    if entry is None:
        raise ConfigurationError(f"no provider configured for model {model_id!r}")
    kind = "mock" if force_mock else entry.get("kind", "mock")
    return ModelSpec(
        model_id=model_id,
        kind=kind,
        endpoint=None if kind == "mock" else entry.get("endpoint"),
        auth_env=None if kind == "mock" else entry.get("auth_env"),
        temperature=entry.get("temperature", 0.7),
        max_output_tokens=entry.get("max_output_tokens", 2048),
    )


def hyperparams_from(config: dict, seed: int) -> Hyperparams:
    section = config["lstm"]
    return Hyperparams(
        hidden_dim=section["hidden_dim"],
        epochs=section["epochs"],
        learning_rate=section["learning_rate"],
        seed=seed,
        clip_norm=section["clip_norm"],
    )


def packaged_questions() -> list[dict]:
    text = resources.files("gazelab").joinpath("data/questions.json").read_text("utf-8")
    return json.loads(text)


def questions_from(config: dict) -> list[dict]:
    path = config["difficulty"].get("questions_file")
    if path:
        return json.loads(Path(path).read_text("utf-8"))
    return packaged_questions()
