"""Provider-agnostic chat-completion gateway.

One code path serves real HTTP chat APIs and the deterministic mock used by
tests and desk-scale runs. Transient transport failures are retried with
exponential backoff; auth and content errors never are. Every request lands
in an append-only run log.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .canonical import canonical_json, digest
from .errors import ConfigurationError, GazelabError
from .patterns import BehavioralPattern
from .segmentation import PromptBundle
from .synthetic import subseed

KNOWN_MODEL_IDS = ("gpt4o", "o1", "r1", "mock")


class AuthError(ConfigurationError):
    """API key environment variable is missing for a non-mock provider."""


class TransportError(GazelabError):
    """A network-level failure; retryable up to the attempt budget."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class RequestError(GazelabError):
    """The provider rejected the request (4xx); never retried."""


class AggregateRunError(GazelabError):
    """Every repetition of a repeated run failed."""


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    kind: str = "mock"  # "mock" | "http"
    endpoint: Optional[str] = None
    auth_env: Optional[str] = None
    temperature: float = 0.7
    max_output_tokens: int = 2048
    seed_salt: str = ""
    max_inflight: int = 2

    def __post_init__(self):
        if self.kind == "mock" and (self.endpoint or self.auth_env):
            raise ConfigurationError("mock provider takes no endpoint or auth")
        if self.kind == "http" and not self.endpoint:
            raise ConfigurationError(f"http provider {self.model_id!r} needs an endpoint")


@dataclass(frozen=True)
class ModelResponse:
    model_id: str
    request_digest: str
    text: str
    latency_ms: float
    run_index: int


class RunLog:
    """Append-only .jsonl request log; the writer is serialized."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def write(self, record: dict):
        with self._lock:
            self.records.append(record)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_json(record) + "\n")

    def failures(self) -> list[dict]:
        return [r for r in self.records if r.get("status") != "ok"]


# --- Providers ---------------------------------------------------------------

_MOCK_VOCABULARY = (
    "Drivers fixate on the problem area for longer stretches than navigators once an error surfaces.",
    "Navigators produce shorter average fixation durations than drivers across every question.",
    "Expert participants return to the question stem less often after their first full reading.",
    "Students revisit the question stem repeatedly before attempting any edit in the problem area.",
    "Saccade durations spike immediately before a participant switches areas of interest.",
    "Fixation durations in the problem area grow steadily as task difficulty increases.",
    "Expert gaze alternates between stem and problem area in short, regular cycles.",
    "Students show long dwell times on the problem area without corresponding edits.",
    "Drivers lead attention shifts, with navigators following into the same region within a few fixations.",
    "High saccade counts cluster around transitions between questions.",
    "Experts spend proportionally more time in the problem area than in the question stem.",
    "Student scanpaths are more dispersed, touching regions outside both defined areas of interest.",
    "Fixation duration variance is higher for students than for experts on hard questions.",
    "Navigators re-read the question stem while the driver stays anchored in the problem area.",
    "Short fixations dominate the first seconds of every new question for all participants.",
    "Experts reach the problem area faster after question onset than students do.",
    "Repeated back-and-forth between stem and problem area precedes most corrective actions.",
    "Saccade duration decreases over the course of a question as participants settle on a region.",
    "Students linger in the question stem area even during late stages of a task.",
    "Attention to the problem area is front-loaded for experts and back-loaded for students.",
    "Longer fixations co-occur with lower saccade counts within the same time slice.",
    "Drivers show fewer but longer visits to the problem area compared with navigators.",
    "Gaze coordinates drift toward screen center during idle phases between edits.",
    "The ratio of problem-area time to stem time separates experts from students on medium questions.",
    "Fixation sequences of experts show early convergence onto the eventual error location.",
    "Students exhibit more regressions to previously visited regions than experts.",
    "Peak saccade activity aligns with moments of role hand-off between driver and navigator.",
    "Experts' fixation durations stabilize after the first third of each question.",
    "Problem-area dwell time correlates with question difficulty for the student group only.",
    "Navigators scan a wider horizontal band of the screen than drivers.",
    "Short saccades within the problem area indicate focused debugging rather than searching.",
    "Initial stem-reading time shrinks across consecutive questions for every participant.",
    "Students' gaze leaves the problem area more often without completing an inspection pass.",
    "Vertical gaze movement concentrates in the stem during the first fixations of a question.",
    "Expert pairs synchronize their area-of-interest switches more tightly than student pairs.",
    "Long saccade durations follow fixations near region boundaries.",
    "Fixation count per question is a weaker separator of expertise than fixation duration.",
    "Re-fixations on the same stem line mark comprehension difficulty in the student group.",
    "The last fixations before answering land in the problem area for most participants.",
    "Across questions, total gaze path length is shorter for experts than for students.",
)

_QUESTION_ID_RE = re.compile(r"\[Q:([A-Za-z]\d+)\]")
_LEVELS = ("easy", "medium", "hard")


class MockProvider:
    """Seed-stable stand-in for a chat model.

    Responses are a pure function of (prompt digest, run index, seed). For
    mining-style prompts it emits a numbered list drawn from a fixed
    vocabulary; for difficulty prompts (recognized by their [Q:..] items) it
    emits one "id: level" line per question. A scripted map from prompt
    digest to canned text (or a per-run list of texts) overrides everything.
    """

    reports_latency = False

    VOCAB_SUBSET = 30  # each mock model sees its own slice of the vocabulary

    def __init__(self, seed: int, scripted: Optional[dict] = None):
        self.seed = seed
        self.scripted = dict(scripted or {})
        # A per-instance vocabulary subset makes distinct mock models overlap
        # only partially, so cross-model frequency classes are non-trivial.
        rng = np.random.Generator(np.random.PCG64(subseed(seed, "vocab")))
        picks = rng.choice(len(_MOCK_VOCABULARY), size=self.VOCAB_SUBSET, replace=False)
        self._vocabulary = tuple(_MOCK_VOCABULARY[int(i)] for i in sorted(picks))

    def complete_once(self, prompt: str, run_index: int) -> str:
        key = digest(prompt)
        if key in self.scripted:
            entry = self.scripted[key]
            if isinstance(entry, (list, tuple)):
                return entry[run_index % len(entry)]
            return entry

        question_ids = list(dict.fromkeys(_QUESTION_ID_RE.findall(prompt)))
        if question_ids:
            lines = []
            for qid in question_ids:
                rng = np.random.Generator(
                    np.random.PCG64(subseed(self.seed, "difficulty", key, qid, run_index))
                )
                lines.append(f"{qid}: {_LEVELS[int(rng.integers(0, 3))]}")
            return "\n".join(lines)

        rng = np.random.Generator(np.random.PCG64(subseed(self.seed, "mine", key, run_index)))
        k = int(rng.integers(3, 9))
        picks = rng.choice(len(self._vocabulary), size=k, replace=False)
        lines = ["Observed behavioral patterns:"]
        for n, idx in enumerate(sorted(int(p) for p in picks), start=1):
            lines.append(f"{n}. {self._vocabulary[idx]}")
        return "\n".join(lines)


class HttpProvider:
    """Minimal chat-completions client; endpoint and model are config-driven."""

    reports_latency = True

    def __init__(self, spec: ModelSpec):
        self.spec = spec

    def complete_once(self, prompt: str, run_index: int) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.spec.auth_env:
            key = os.environ.get(self.spec.auth_env)
            if not key:
                raise AuthError(
                    f"environment variable {self.spec.auth_env!r} is not set for "
                    f"model {self.spec.model_id!r}"
                )
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.spec.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.spec.temperature,
            "max_tokens": self.spec.max_output_tokens,
        }
        try:
            resp = httpx.post(self.spec.endpoint, headers=headers, json=body, timeout=120.0)
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure contacting {self.spec.endpoint}: {exc}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"status {resp.status_code} from {self.spec.endpoint}",
                                 status=resp.status_code)
        if resp.status_code >= 400:
            raise RequestError(f"status {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise RequestError(f"malformed completion body: {exc}")


class Gateway:
    """Dispatches prompts to providers with retry, rate limiting, and logging."""

    def __init__(
        self,
        seed: int = 0,
        run_log: Optional[RunLog] = None,
        scripted: Optional[dict] = None,
        max_attempts: int = 3,
        backoff_base: float = 0.25,
        sleep: Callable[[float], None] = time.sleep,
        providers: Optional[dict] = None,
    ):
        self.seed = seed
        self.log = run_log or RunLog()
        self.scripted = scripted
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.sleep = sleep
        self._providers = dict(providers or {})
        self._semaphores: dict[str, threading.Semaphore] = {}

    def provider_for(self, spec: ModelSpec):
        if spec.model_id not in self._providers:
            if spec.kind == "mock":
                provider = MockProvider(
                    subseed(self.seed, spec.model_id, spec.seed_salt), scripted=self.scripted
                )
            else:
                provider = HttpProvider(spec)
            self._providers[spec.model_id] = provider
        return self._providers[spec.model_id]

    def _semaphore_for(self, spec: ModelSpec) -> threading.Semaphore:
        if spec.model_id not in self._semaphores:
            self._semaphores[spec.model_id] = threading.Semaphore(spec.max_inflight)
        return self._semaphores[spec.model_id]

    def complete(self, prompt: str, spec: ModelSpec, run_index: int = 0) -> ModelResponse:
        provider = self.provider_for(spec)
        request_digest = digest(prompt)
        last_error = None
        for attempt in range(self.max_attempts):
            start = time.perf_counter()
            try:
                with self._semaphore_for(spec):
                    text = provider.complete_once(prompt, run_index)
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff_base * (2 ** attempt))
                continue
            latency = (time.perf_counter() - start) * 1000.0 if provider.reports_latency else 0.0
            response = ModelResponse(spec.model_id, request_digest, text, latency, run_index)
            self.log.write(
                {
                    "digest": request_digest,
                    "model_id": spec.model_id,
                    "run_index": run_index,
                    "latency_ms": latency,
                    "status": "ok",
                }
            )
            return response
        self.log.write(
            {
                "digest": request_digest,
                "model_id": spec.model_id,
                "run_index": run_index,
                "latency_ms": 0.0,
                "status": "error",
                "error": str(last_error),
            }
        )
        raise TransportError(
            f"{spec.model_id}: giving up after {self.max_attempts} attempts: {last_error}",
            status=getattr(last_error, "status", None),
        )

    def run_repeated(self, bundle: PromptBundle, spec: ModelSpec, n: int) -> list[ModelResponse]:
        """Run every chunk of ``bundle`` n times (run_index 0..n-1).

        Per-run transport failures are logged and skipped; if nothing at all
        succeeds the whole call fails.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        responses: list[ModelResponse] = []
        failures = 0
        for run_index in range(n):
            for chunk in bundle.payload_chunks:
                try:
                    responses.append(self.complete(chunk, spec, run_index=run_index))
                except TransportError:
                    failures += 1
        if failures and not responses:
            raise AggregateRunError(
                f"all {failures} requests failed for model {spec.model_id!r}"
            )
        return responses


_PATTERN_LINE_RE = re.compile(r"^\s*(?:\d+\s*[.)]|[-*•])\s+(.+?)\s*$")


def parse_patterns(
    resp: ModelResponse, stage: str, prompt_level: str
) -> list[BehavioralPattern]:
    """Extract enumerated pattern statements from a model response.

    Numbered or bulleted lines are taken verbatim (every extracted string is
    a substring of the response); a bare JSON array of strings is accepted as
    the declared alternative. Anything else parses to an empty list.
    """
    texts: list[str] = []
    for line in resp.text.splitlines():
        match = _PATTERN_LINE_RE.match(line)
        if match:
            texts.append(match.group(1))
    if not texts:
        stripped = resp.text.strip()
        if stripped.startswith("["):
            try:
                data = json.loads(stripped)
                texts = [t for t in data if isinstance(t, str)]
            except ValueError:
                texts = []
    return [
        BehavioralPattern.make(text, stage, prompt_level, resp.model_id, resp.run_index)
        for text in texts
    ]
