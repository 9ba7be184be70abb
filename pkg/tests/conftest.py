import numpy as np
import pytest

from gazelab.gaze_data import parse_gaze_csv
from gazelab.segmentation import TemplateSet

HEADER = (
    "participant_id,role,expertise,question_id,timestamp_ms,fixation_number,"
    "fixation_duration_ms,saccade_number,saccade_duration_ms,gaze_x,gaze_y"
)


def csv_row(
    pid="P1",
    role="driver",
    expertise="expert",
    qid="A1",
    t=0,
    fix_n=0,
    fix="200",
    sac_n=0,
    sac="30.5",
    x="0.5",
    y="0.5",
):
    return f"{pid},{role},{expertise},{qid},{t},{fix_n},{fix},{sac_n},{sac},{x},{y}"


def make_csv(rows):
    return HEADER + "\n" + "\n".join(rows) + "\n"


@pytest.fixture(scope="session")
def templates():
    return TemplateSet.load()


@pytest.fixture
def small_table():
    rows = [
        csv_row(t=0, fix="210.5", x="0.2", y="0.3"),
        csv_row(t=300, fix_n=1, fix="180", x="0.7", y="0.8"),
        csv_row(qid="A2", t=100, fix="150.25", x="0.6", y="0.6"),
        csv_row(pid="P2", expertise="student", t=50, fix="320", x="0.1", y="0.9"),
    ]
    return parse_gaze_csv(make_csv(rows))


def random_table(rng: np.random.Generator, n_rows: int, n_participants=3, n_questions=4):
    """Randomized well-formed gaze table for property tests; numeric values
    are quantized to the canonical 6-significant-digit form."""
    rows = []
    t_per_key = {}
    for _ in range(n_rows):
        pid = f"P{rng.integers(1, n_participants + 1)}"
        qid = f"A{rng.integers(1, n_questions + 1)}"
        t = t_per_key.get((pid, qid), 0) + int(rng.integers(1, 500))
        t_per_key[(pid, qid)] = t
        rows.append(
            csv_row(
                pid=pid,
                qid=qid,
                expertise="expert" if pid != "P1" else "student",
                t=t,
                fix=f"{rng.uniform(50, 1999):.6g}",
                sac=f"{rng.uniform(0, 100):.6g}",
                x=f"{rng.uniform(0, 1):.6g}",
                y=f"{rng.uniform(0, 1):.6g}",
            )
        )
    return parse_gaze_csv(make_csv(rows))
