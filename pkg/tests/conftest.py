import numpy as np
import pytest

from wta.data import OrdinalScale, Trajectory, TrialDataset

# Ten-patient toxicity snapshot, days 0..10 shown. Later days are cut off,
# so rows 5, 7 and 9 list more days in `duration` than are shown.
SNAPSHOT_WIDE = """patient_id,arm,duration,0,1,2,3,4,5,6,7,8,9,10
1,1,10,0,0,0,0,0,0,1,1,1,0,
2,1,10,0,0,0,0,0,1,1,1,1,1,
3,0,11,0,0,0,0,0,0,0,0,0,0,0
4,1,6,0,0,0,0,0,0,,,,,
5,0,13,0,0,0,0,0,0,0,0,0,1,1
6,1,9,0,0,0,0,0,0,0,0,0,,
7,0,18,0,0,0,0,0,0,1,1,1,2,2
8,1,6,0,0,0,0,0,0,,,,,
9,1,29,0,0,0,0,0,0,0,0,0,1,0
10,0,4,0,0,0,0,,,,,,,
"""


def make_dataset(rows, scale=(0, 4), censor_at_max=False):
    """Build a dataset from ``[(arm, scores), ...]`` with ids 1..n."""
    trajectories = tuple(
        Trajectory(str(i + 1), str(arm), tuple(int(s) for s in scores))
        for i, (arm, scores) in enumerate(rows)
    )
    return TrialDataset(OrdinalScale(*scale), trajectories, censor_at_max=censor_at_max)


def random_dataset(rng, n=20, r=4, max_len=15, arms=("0", "1"), monotone=False,
                   start_zero=True):
    rows = []
    for i in range(n):
        length = int(rng.integers(1, max_len + 1))
        if monotone:
            s = np.minimum(np.cumsum(rng.integers(0, 2, size=length)), r)
            s[0] = 0
        else:
            s = rng.integers(0, r + 1, size=length)
            if start_zero:
                s[0] = 0
        rows.append((arms[i % len(arms)], s.tolist()))
    return make_dataset(rows, (0, r))


@pytest.fixture
def snapshot_wide():
    return SNAPSHOT_WIDE


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
