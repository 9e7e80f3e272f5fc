"""Data model for longitudinal ordinal trial data and its CSV formats.

Every patient is observed on a contiguous daily (or monthly) grid starting at
time 0 and is censored right after the last recorded observation. The time
index is therefore implicit: ``Trajectory.scores[t]`` is the score at time t.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

HIGHER_IS_WORSE = "higher-is-worse"
HIGHER_IS_BETTER = "higher-is-better"
POLARITIES = (HIGHER_IS_WORSE, HIGHER_IS_BETTER)

LONG_HEADER = ("patient_id", "arm", "time", "score")
WIDE_PREFIX = ("patient_id", "arm", "duration")


class DataValidationError(ValueError):
    """Raised for malformed trial data. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class OrdinalScale:
    min_score: int
    max_score: int
    polarity: str = HIGHER_IS_WORSE

    def __post_init__(self):
        if self.max_score <= self.min_score:
            raise DataValidationError(
                f"scale max ({self.max_score}) must exceed min ({self.min_score})"
            )
        if self.polarity not in POLARITIES:
            raise DataValidationError(f"unknown polarity {self.polarity!r}")

    @property
    def range(self) -> int:
        return self.max_score - self.min_score

    @property
    def is_normalized(self) -> bool:
        return self.min_score == 0 and self.polarity == HIGHER_IS_WORSE

    def contains(self, score: int) -> bool:
        return self.min_score <= score <= self.max_score

    @classmethod
    def parse(cls, text: str) -> "OrdinalScale":
        """Parse ``"lo:hi"`` or ``"lo:hi:higher-is-better"``."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise DataValidationError(f"bad scale {text!r}; expected lo:hi[:polarity]")
        try:
            lo, hi = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataValidationError(f"bad scale {text!r}; bounds must be integers") from None
        polarity = parts[2] if len(parts) == 3 else HIGHER_IS_WORSE
        return cls(lo, hi, polarity)


@dataclass(frozen=True)
class Trajectory:
    patient_id: str
    arm: str
    scores: tuple[int, ...]

    def __post_init__(self):
        if not self.scores:
            raise DataValidationError(f"patient {self.patient_id}: no observations")

    @property
    def censor_time(self) -> int:
        return len(self.scores) - 1

    @property
    def times(self) -> range:
        return range(len(self.scores))

    def points(self) -> list[tuple[int, int]]:
        return list(enumerate(self.scores))

    def observed_at(self, t: int) -> bool:
        return 0 <= t < len(self.scores)


@dataclass(frozen=True)
class TrialDataset:
    """Immutable collection of trajectories sharing one ordinal scale.

    ``censor_at_max`` records whether the data-generating protocol stops
    following a patient once the maximum score is reached; the null
    simulator needs it to reproduce the protocol.
    """

    scale: OrdinalScale
    trajectories: tuple[Trajectory, ...]
    time_unit: str = "days"
    censor_at_max: bool = False

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        seen = set()
        for traj in self.trajectories:
            if traj.patient_id in seen:
                raise DataValidationError(f"duplicate patient_id {traj.patient_id!r}")
            seen.add(traj.patient_id)
            for t, s in enumerate(traj.scores):
                if not self.scale.contains(s):
                    raise DataValidationError(
                        f"patient {traj.patient_id}: score {s} at time {t} outside "
                        f"scale {self.scale.min_score}..{self.scale.max_score}"
                    )

    def __len__(self):
        return len(self.trajectories)

    @property
    def arm_labels(self) -> tuple[str, ...]:
        return tuple(sorted({t.arm for t in self.trajectories}))

    @property
    def max_time(self) -> int:
        return max((t.censor_time for t in self.trajectories), default=0)

    def arm(self, label: str) -> list[Trajectory]:
        return [t for t in self.trajectories if t.arm == label]

    def n0(self, label: str) -> int:
        """Starting patient count of an arm (everyone is observed at time 0)."""
        return sum(1 for t in self.trajectories if t.arm == label)

    def resolve_arms(self, arms: Sequence[str] | None = None) -> tuple[str, str]:
        """Return the (A, B) label pair for a two-sample comparison."""
        if arms is None:
            labels = self.arm_labels
            if len(labels) != 2:
                raise DataValidationError(
                    f"two-sample tests need exactly two arms, found {list(labels)}; "
                    "pass an explicit arm pair"
                )
            return labels[0], labels[1]
        a, b = arms
        if a == b:
            raise DataValidationError("arm pair must name two different arms")
        for label in (a, b):
            if not any(t.arm == label for t in self.trajectories):
                raise DataValidationError(f"arm {label!r} has no patients")
        return str(a), str(b)

    @cached_property
    def _dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = len(self.trajectories)
        width = self.max_time + 1
        scores = np.zeros((n, width), dtype=np.int64)
        observed = np.zeros((n, width), dtype=bool)
        for i, traj in enumerate(self.trajectories):
            m = len(traj.scores)
            scores[i, :m] = traj.scores
            scores[i, m:] = traj.scores[-1]
            observed[i, :m] = True
        arms = np.array([t.arm for t in self.trajectories], dtype=object)
        for a in (scores, observed):
            a.setflags(write=False)
        return scores, observed, arms

    def dense(self, arms: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense view ``(scores, observed, group)`` restricted to an arm pair.

        ``scores`` is padded past censoring with the last value; ``group`` is
        0 for arm A and 1 for arm B.
        """
        a, b = self.resolve_arms(arms)
        scores, observed, labels = self._dense
        keep = (labels == a) | (labels == b)
        group = (labels[keep] == b).astype(np.int64)
        return scores[keep], observed[keep], group


def _check_header(row: Sequence[str], expected: Sequence[str], what: str) -> None:
    got = [c.strip() for c in row[: len(expected)]]
    if got != list(expected):
        raise DataValidationError(
            f"{what} header must start with {','.join(expected)}, got {','.join(row)}", 1
        )


def _parse_int(cell: str, name: str, line: int) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise DataValidationError(f"{name} {cell!r} is not an integer", line) from None


def _infer_scale(rows: Iterable[Sequence[int]]) -> OrdinalScale:
    values = [s for scores in rows for s in scores]
    lo, hi = min(values), max(values)
    if hi == lo:
        hi = lo + 1
    return OrdinalScale(lo, hi)


def ingest_long_csv(
    text: str | io.TextIOBase,
    scale: OrdinalScale | None = None,
    *,
    time_unit: str = "days",
    censor_at_max: bool = False,
) -> TrialDataset:
    """Read ``patient_id,arm,time,score`` rows into a dataset.

    Rows may come in any order. Each patient must be observed at every time
    from 0 through their last time. Without ``scale`` the observed score
    range is used.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise DataValidationError("empty input: no trajectories")
    _check_header(header, LONG_HEADER, "long CSV")
    extra = [c.strip() for c in header[4:]]
    if "status" in extra:
        log.warning("ignoring 'status' column: censoring is implied by the last observation")

    arms: dict[str, str] = {}
    points: dict[str, dict[int, tuple[int, int]]] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 4:
            raise DataValidationError(f"expected 4 fields, got {len(row)}", line)
        pid, arm = row[0].strip(), row[1].strip()
        t = _parse_int(row[2], "time", line)
        s = _parse_int(row[3], "score", line)
        if t < 0:
            raise DataValidationError(f"negative time {t} for patient {pid}", line)
        if scale is not None and not scale.contains(s):
            raise DataValidationError(
                f"score {s} outside scale {scale.min_score}..{scale.max_score}", line
            )
        if arms.setdefault(pid, arm) != arm:
            raise DataValidationError(
                f"patient {pid} appears in arms {arms[pid]!r} and {arm!r}", line
            )
        seen = points.setdefault(pid, {})
        if t in seen:
            raise DataValidationError(
                f"duplicate time {t} for patient {pid} (first at line {seen[t][1]})", line
            )
        seen[t] = (s, line)

    if not points:
        raise DataValidationError("no trajectories")

    trajectories = []
    for pid, seen in points.items():
        times = sorted(seen)
        if times != list(range(len(times))):
            missing = sorted(set(range(times[-1] + 1)) - set(times))
            raise DataValidationError(
                f"patient {pid}: follow-up must be contiguous from time 0; "
                f"missing times {missing[:5]}",
                seen[times[-1]][1],
            )
        trajectories.append(Trajectory(pid, arms[pid], tuple(seen[t][0] for t in times)))

    if scale is None:
        scale = _infer_scale(t.scores for t in trajectories)
    return TrialDataset(scale, tuple(trajectories), time_unit, censor_at_max)


def ingest_wide_csv(
    text: str | io.TextIOBase,
    scale: OrdinalScale | None = None,
    *,
    time_unit: str = "days",
    censor_at_max: bool = False,
) -> TrialDataset:
    """Read the one-row-per-patient layout ``patient_id,arm,duration,0,1,...``.

    ``duration`` counts recorded time points. A mismatch with the filled cells
    is only logged, and not at all when the row stops early at the scale
    maximum.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise DataValidationError("empty input: no trajectories")
    _check_header(header, WIDE_PREFIX, "wide CSV")
    time_cols = [c.strip() for c in header[3:]]
    for k, c in enumerate(time_cols):
        if c != str(k):
            raise DataValidationError(f"time column {k} is labelled {c!r}", 1)

    rows = []
    ids = set()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        pid, arm = row[0].strip(), row[1].strip()
        if pid in ids:
            raise DataValidationError(f"duplicate patient_id {pid}", line)
        ids.add(pid)
        duration = _parse_int(row[2], "duration", line)
        cells = [c.strip() for c in row[3:]]
        while cells and not cells[-1]:
            cells.pop()
        if not cells:
            raise DataValidationError(f"patient {pid} has no observations", line)
        if "" in cells:
            hole = cells.index("")
            raise DataValidationError(
                f"patient {pid}: blank cell at time {hole} followed by a later observation",
                line,
            )
        scores = tuple(_parse_int(c, "score", line) for c in cells)
        if scale is not None:
            for t, s in enumerate(scores):
                if not scale.contains(s):
                    raise DataValidationError(
                        f"score {s} at time {t} outside scale "
                        f"{scale.min_score}..{scale.max_score}",
                        line,
                    )
        rows.append((pid, arm, duration, scores, line))

    if not rows:
        raise DataValidationError("no trajectories")
    if scale is None:
        scale = _infer_scale(r[3] for r in rows)
    trajectories = []
    for pid, arm, duration, scores, line in rows:
        if duration != len(scores):
            early_max = len(scores) < duration and scores[-1] == scale.max_score
            if not early_max:
                log.warning(
                    "line %d: patient %s duration %d but %d recorded time points",
                    line, pid, duration, len(scores),
                )
        trajectories.append(Trajectory(pid, arm, scores))
    return TrialDataset(scale, tuple(trajectories), time_unit, censor_at_max)


def read_dataset(path, scale: OrdinalScale | None = None, **kwargs) -> TrialDataset:
    """Load a long or wide CSV file, sniffing the layout from the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    first = text.splitlines()[0] if text else ""
    cols = [c.strip() for c in first.split(",")]
    if tuple(cols[:3]) == WIDE_PREFIX:
        return ingest_wide_csv(text, scale, **kwargs)
    return ingest_long_csv(text, scale, **kwargs)


def export_long_csv(dataset: TrialDataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LONG_HEADER)
    for traj in dataset.trajectories:
        for t, s in enumerate(traj.scores):
            writer.writerow((traj.patient_id, traj.arm, t, s))
    return out.getvalue()


def export_wide_csv(dataset: TrialDataset) -> str:
    width = dataset.max_time + 1
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(WIDE_PREFIX + tuple(str(t) for t in range(width)))
    for traj in dataset.trajectories:
        cells = [str(s) for s in traj.scores] + [""] * (width - len(traj.scores))
        writer.writerow([traj.patient_id, traj.arm, len(traj.scores), *cells])
    return out.getvalue()


def normalize_scale(dataset: TrialDataset) -> TrialDataset:
    """Shift scores so the scale starts at 0, reflecting higher-is-better scales."""
    scale = dataset.scale
    if scale.is_normalized:
        return dataset
    if scale.polarity == HIGHER_IS_BETTER:
        def f(s):
            return scale.max_score - s
    else:
        def f(s):
            return s - scale.min_score
    trajectories = tuple(
        replace(t, scores=tuple(f(s) for s in t.scores)) for t in dataset.trajectories
    )
    return replace(dataset, scale=OrdinalScale(0, scale.range), trajectories=trajectories)


def restore_scale(dataset: TrialDataset, original: OrdinalScale) -> TrialDataset:
    """Invert :func:`normalize_scale` given the scale the data came from."""
    if not dataset.scale.is_normalized or dataset.scale.range != original.range:
        raise DataValidationError("dataset is not a normalization of the given scale")
    if original.polarity == HIGHER_IS_BETTER:
        def f(s):
            return original.max_score - s
    else:
        def f(s):
            return s + original.min_score
    trajectories = tuple(
        replace(t, scores=tuple(f(s) for s in t.scores)) for t in dataset.trajectories
    )
    return replace(dataset, scale=original, trajectories=trajectories)


RECIST_CATEGORIES = ("CR", "PR", "SD", "PD", "Death")


def response_rates(counts: Mapping[str, int]) -> tuple[float, float]:
    """Objective response rate and disease control rate from RECIST counts."""
    unknown = set(counts) - set(RECIST_CATEGORIES)
    if unknown:
        raise ValueError(f"unknown response categories {sorted(unknown)}")
    if any(v < 0 for v in counts.values()):
        raise ValueError("counts must be non-negative")
    total = sum(counts.values())
    if total == 0:
        raise ValueError("response counts sum to zero")
    cr, pr, sd = (counts.get(k, 0) for k in ("CR", "PR", "SD"))
    return (cr + pr) / total, (cr + pr + sd) / total


def from_arrays(
    scores: np.ndarray,
    lengths: np.ndarray,
    arms: Sequence[str],
    scale: OrdinalScale,
    *,
    time_unit: str = "days",
    censor_at_max: bool = False,
    ids: Sequence[str] | None = None,
) -> TrialDataset:
    """Build a dataset from a padded score matrix and per-row lengths."""
    if ids is None:
        ids = [str(i + 1) for i in range(len(lengths))]
    rows = scores.tolist()
    trajectories = tuple(
        Trajectory(ids[i], arms[i], tuple(rows[i][: int(lengths[i])]))
        for i in range(len(lengths))
    )
    return TrialDataset(scale, trajectories, time_unit, censor_at_max)


__all__ = [
    "DataValidationError",
    "OrdinalScale",
    "Trajectory",
    "TrialDataset",
    "HIGHER_IS_BETTER",
    "HIGHER_IS_WORSE",
    "ingest_long_csv",
    "ingest_wide_csv",
    "read_dataset",
    "export_long_csv",
    "export_wide_csv",
    "normalize_scale",
    "restore_scale",
    "response_rates",
    "from_arrays",
]
