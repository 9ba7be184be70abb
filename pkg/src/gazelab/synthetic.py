"""Deterministic synthetic gaze data, benchmark sequences, and desk-scale
stand-ins for the human/literature inputs.

The real pair-programming dataset is an optional input; everything here
exists so the full pipeline runs and is testable on a laptop with nothing
external. All generators are pure functions of their seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .canonical import quantize
from .gaze_data import AoiDefinition

QUESTION_IDS = ("A1", "A2", "A3", "B1", "B2", "B3", "C1", "C2", "C3", "D1", "D2", "D3")

CSV_HEADER = (
    "participant_id,role,expertise,question_id,timestamp_ms,fixation_number,"
    "fixation_duration_ms,saccade_number,saccade_duration_ms,gaze_x,gaze_y"
)


def subseed(seed: int, *parts) -> int:
    """Stable 64-bit seed derived from a master seed and a key path."""
    text = str(seed) + "|" + "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def _question_signature(qid: str) -> dict:
    """Per-question waveform parameters, fixed across participants."""
    rng = np.random.Generator(np.random.PCG64(subseed(0xA011, qid)))
    return {
        "fix_base": 240.0 + 140.0 * rng.random(),
        "fix_amp": 60.0 + 40.0 * rng.random(),
        "fix_freq": 0.008 + 0.015 * rng.random(),
        "sac_base": 45.0 + 35.0 * rng.random(),
        "sac_amp": 15.0 + 10.0 * rng.random(),
        "sac_freq": 0.008 + 0.015 * rng.random(),
        "gaze_freq": 0.008 + 0.02 * rng.random(),
        "phase": rng.random(),
    }


def default_aois(question_ids=QUESTION_IDS) -> list[AoiDefinition]:
    """One Error (problem area) and one NonError (question stem) region per
    question, on a shared screen layout."""
    aois = []
    for qid in question_ids:
        aois.append(AoiDefinition(f"{qid}_problem_area", qid, (0.55, 0.55, 0.95, 0.95), "Error"))
        aois.append(AoiDefinition(f"{qid}_question_stem", qid, (0.05, 0.05, 0.45, 0.45), "NonError"))
    return aois


def _sequence_rows(pid, role, expertise, qid, length, seed):
    sig = _question_signature(qid)
    rng = np.random.Generator(np.random.PCG64(subseed(seed, pid, qid)))
    jitter = 1.0 + 0.005 * (rng.random() - 0.5)
    phase = sig["phase"] + 0.01 * rng.random()

    rows = []
    t = int(rng.integers(0, 500))
    for i in range(length):
        fix = sig["fix_base"] * jitter + sig["fix_amp"] * math.sin(
            2 * math.pi * (sig["fix_freq"] * i + phase)
        ) + rng.normal(0.0, 0.5)
        sac = sig["sac_base"] * jitter + sig["sac_amp"] * math.sin(
            2 * math.pi * (sig["sac_freq"] * i + phase + 0.25)
        ) + rng.normal(0.0, 0.25)
        fix = min(max(fix, 60.0), 1900.0)
        sac = max(sac, 1.0)
        gx = 0.5 + 0.33 * math.sin(2 * math.pi * (sig["gaze_freq"] * i + phase))
        gy = 0.5 + 0.33 * math.cos(2 * math.pi * (sig["gaze_freq"] * i + phase + 0.17))
        gx += rng.normal(0.0, 0.004)
        gy += rng.normal(0.0, 0.004)
        gx = min(max(gx, 0.0), 1.0)
        gy = min(max(gy, 0.0), 1.0)
        rows.append(
            {
                "participant_id": pid,
                "role": role,
                "expertise": expertise,
                "question_id": qid,
                "timestamp_ms": t,
                "fixation_number": i,
                "fixation_duration_ms": quantize(fix),
                "saccade_number": i,
                "saccade_duration_ms": quantize(sac),
                "gaze_x": quantize(gx),
                "gaze_y": quantize(gy),
            }
        )
        t += int(fix + sac) + 1
    return rows


@dataclass
class SyntheticExport:
    csv_text: str
    manifest: dict
    aois: list[AoiDefinition]


def make_gaze_export(
    seed: int,
    n_experts: int = 10,
    n_students: int = 9,
    sequence_length: int = 24,
    question_ids=QUESTION_IDS,
    missing_rows: int = 0,
    noise_rows: int = 0,
    irrelevant_rows: int = 0,
) -> SyntheticExport:
    """Generate a full synthetic eye-tracker export plus its manifest.

    Defaults mirror the source study's 19 participants (10 experts, 9
    students). The optional dirty-row counters append rows that the cleaning
    rules must drop, for exercising the cleaning report.
    """
    participants = []
    for i in range(n_experts):
        participants.append((f"E{i + 1}", "expert"))
    for i in range(n_students):
        participants.append((f"S{i + 1}", "student"))

    lengths = {}
    lines = [CSV_HEADER]
    manifest_participants = []
    for idx, (pid, expertise) in enumerate(participants):
        role = "driver" if idx % 2 == 0 else "navigator"
        manifest_participants.append({"id": pid, "expertise": expertise, "role": role})
        for qid in question_ids:
            length = sequence_length + subseed(seed, "len", qid) % max(1, sequence_length // 4)
            lengths[f"{pid}:{qid}"] = length
            for row in _sequence_rows(pid, role, expertise, qid, length, seed):
                lines.append(
                    ",".join(
                        str(row[c])
                        for c in (
                            "participant_id",
                            "role",
                            "expertise",
                            "question_id",
                            "timestamp_ms",
                            "fixation_number",
                            "fixation_duration_ms",
                            "saccade_number",
                            "saccade_duration_ms",
                            "gaze_x",
                            "gaze_y",
                        )
                    )
                )

    clean_rows = len(lines) - 1
    pid, qid = participants[0][0], question_ids[0]
    for i in range(missing_rows):
        lines.append(f"{pid},driver,expert,{qid},{10_000_000 + i},1,,1,30.5,0.5,0.5")
    for i in range(noise_rows):
        lines.append(f"{pid},driver,expert,{qid},{11_000_000 + i},1,5,1,30.5,0.5,0.5")
    for i in range(irrelevant_rows):
        lines.append(f"{pid},driver,expert,Z9,{12_000_000 + i},1,300,1,30.5,0.5,0.5")

    manifest = {
        "seed": seed,
        "participants": manifest_participants,
        "question_ids": list(question_ids),
        "sequence_lengths": lengths,
        "clean_rows": clean_rows,
        "dirty_rows": missing_rows + noise_rows + irrelevant_rows,
    }
    return SyntheticExport("\n".join(lines) + "\n", manifest, default_aois(question_ids))


def inject_window_spikes(
    windows,
    fraction: float,
    seed: int,
    placement: dict[tuple[str, str], float],
    feature_scale: np.ndarray,
    amplitude: float = 8.0,
    burst_len: int = 4,
):
    """Inject spike bursts into a share of raw (un-normalized) windows.

    ``placement`` maps (participant, question) bins to sampling weights; the
    injected count is ``round(fraction * len(windows))``, at least one per
    nonzero-weight bin when possible. Returns the set of injected window
    indices (the detection ground truth). Windows are modified in place.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n_spikes = max(1, round(fraction * len(windows)))

    bins: dict[tuple[str, str], list[int]] = {key: [] for key in placement}
    for i, w in enumerate(windows):
        key = (w.participant_id, w.question_id)
        if key in bins:
            bins[key].append(i)

    weights = np.array([placement[k] for k in placement], dtype=float)
    weights = weights / weights.sum()
    keys = list(placement)
    quotas = [int(round(n_spikes * w)) for w in weights]
    while sum(quotas) < n_spikes:
        quotas[int(np.argmax(weights))] += 1
    while sum(quotas) > n_spikes:
        quotas[int(np.argmax(quotas))] -= 1

    injected = []
    for key, quota in zip(keys, quotas):
        candidates = bins[key]
        take = min(quota, len(candidates))
        chosen = rng.choice(len(candidates), size=take, replace=False) if take else []
        for j in sorted(int(c) for c in np.atleast_1d(chosen)):
            idx = candidates[j]
            w = windows[idx]
            start = int(rng.integers(0, max(1, w.features.shape[0] - burst_len)))
            for f in range(min(2, w.features.shape[1])):
                w.features[start : start + burst_len, f] += amplitude * feature_scale[f]
            injected.append(idx)
    return sorted(injected)


# --- Desk-scale stand-ins for human and literature inputs -------------------

_QUARTILES = ("Q1", "Q2", "Q3", "Q4")


def synthetic_evidence(pattern_id: str, seed: int) -> list[dict]:
    """Five literature-evidence records for one pattern, support-leaning so
    most patterns come out valid, with enough spread to exercise scoring."""
    rng = np.random.Generator(np.random.PCG64(subseed(seed, "evidence", pattern_id)))
    records = []
    for rank in range(1, 6):
        stance = int(rng.choice([1, 1, 1, 0, -1]))
        records.append(
            {
                "pattern_id": pattern_id,
                "rank": rank,
                "quartile": _QUARTILES[int(rng.integers(0, 4))],
                "stance": stance,
            }
        )
    return records


def synthetic_expert_verdict(pattern_id: str, literature_verdict: str, seed: int,
                             agree_rate: float = 0.85) -> str:
    """Simulated expert judgment that agrees with the literature verdict at a
    configurable rate (keeps Kappa in an interesting range)."""
    rng = np.random.Generator(np.random.PCG64(subseed(seed, "expert", pattern_id)))
    if rng.random() < agree_rate:
        return literature_verdict
    return "invalid" if literature_verdict == "valid" else "valid"
