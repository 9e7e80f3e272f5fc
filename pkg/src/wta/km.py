"""Kaplan-Meier estimation and the standard logrank test on a binary event.

An ordinal trajectory is reduced to time-to-event data by declaring an event
the first time the score reaches ``threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataValidationError, OrdinalScale, Trajectory, TrialDataset
from .results import Contribution, TestResult, z_test

EVENT = "event"
CENSORED = "censored"


@dataclass(frozen=True)
class SurvivalStep:
    time: int
    survival: float
    at_risk: int
    events: int


@dataclass(frozen=True)
class SurvivalCurve:
    steps: tuple[SurvivalStep, ...]
    censor_marks: tuple[tuple[int, int], ...]
    n_patients: int

    def survival_at(self, t: float) -> float:
        s = 1.0
        for step in self.steps:
            if step.time > t:
                break
            s = step.survival
        return s


def _check_threshold(threshold: int, scale: OrdinalScale | None) -> None:
    if scale is not None and not (scale.min_score < threshold <= scale.max_score):
        raise DataValidationError(
            f"threshold {threshold} outside ({scale.min_score}, {scale.max_score}]"
        )


def binary_event_transform(
    traj: Trajectory, threshold: int, scale: OrdinalScale | None = None
) -> tuple[int, str]:
    """First time the score reaches ``threshold``, else the censoring time."""
    _check_threshold(threshold, scale)
    for t, s in enumerate(traj.scores):
        if s >= threshold:
            return t, EVENT
    return traj.censor_time, CENSORED


def event_arrays(
    dataset: TrialDataset, threshold: int, arms: Sequence[str] | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized binary transform: ``(time, is_event, group)`` arrays."""
    _check_threshold(threshold, dataset.scale)
    scores, observed, group = dataset.dense(arms)
    return _events_from_dense(scores, observed, threshold) + (group,)


def _events_from_dense(scores, observed, threshold):
    hit = (scores >= threshold) & observed
    is_event = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    last = observed.sum(axis=1) - 1
    return np.where(is_event, first, last), is_event


def km_curve(times: np.ndarray, is_event: np.ndarray) -> SurvivalCurve:
    """Product-limit estimate for one group.

    Censored subjects count in the risk set at their censoring time and
    leave it afterwards.
    """
    times = np.asarray(times, dtype=np.int64)
    is_event = np.asarray(is_event, dtype=bool)
    steps = []
    marks = []
    s = 1.0
    if len(times):
        width = int(times.max()) + 1
        d = np.bincount(times[is_event], minlength=width)
        c = np.bincount(times[~is_event], minlength=width)
        exits = d + c
        at_risk = exits[::-1].cumsum()[::-1]
        for t in range(width):
            if d[t]:
                s *= 1.0 - float(d[t]) / float(at_risk[t])
                steps.append(SurvivalStep(t, s, int(at_risk[t]), int(d[t])))
            if c[t]:
                marks.append((t, int(c[t])))
    return SurvivalCurve(tuple(steps), tuple(marks), len(times))


def km_estimate(
    dataset: TrialDataset, threshold: int, arms: Sequence[str] | None = None
) -> dict[str, SurvivalCurve]:
    """Per-arm Kaplan-Meier curves. With ``arms=None`` every arm is estimated."""
    _check_threshold(threshold, dataset.scale)
    labels = dataset.arm_labels if arms is None else tuple(arms)
    curves = {}
    for label in labels:
        members = dataset.arm(label)
        if not members:
            raise DataValidationError(f"arm {label!r} has no patients")
        pairs = [binary_event_transform(t, threshold) for t in members]
        times = np.array([p[0] for p in pairs])
        events = np.array([p[1] == EVENT for p in pairs])
        curves[label] = km_curve(times, events)
    return curves


def logrank_contributions(
    times: np.ndarray, is_event: np.ndarray, group: np.ndarray
) -> list[Contribution]:
    """Per-failure-time (d_A, e_A, V) over failure times pooled across arms."""
    times = np.asarray(times, dtype=np.int64)
    is_event = np.asarray(is_event, dtype=bool)
    group = np.asarray(group)
    if not len(times) or not is_event.any():
        return []
    width = int(times.max()) + 1
    in_a = group == 0
    exits_a = np.bincount(times[in_a], minlength=width)
    exits_b = np.bincount(times[~in_a], minlength=width)
    n_a = exits_a[::-1].cumsum()[::-1]
    n_b = exits_b[::-1].cumsum()[::-1]
    d_a = np.bincount(times[is_event & in_a], minlength=width)
    d = np.bincount(times[is_event], minlength=width)
    out = []
    for t in np.flatnonzero(d):
        n = n_a[t] + n_b[t]
        if n <= 1:
            # a lone patient carries no between-arm information
            out.append(Contribution(int(t), 0.0, 0.0, 0.0))
            continue
        e = n_a[t] * d[t] / n
        v = n_a[t] * n_b[t] * (n - d[t]) * d[t] / (n * n * (n - 1))
        out.append(Contribution(int(t), float(d_a[t]), float(e), float(v)))
    return out


def logrank_test(
    dataset: TrialDataset, threshold: int, arms: Sequence[str] | None = None
) -> TestResult:
    """Two-sided logrank test of arm A against arm B on the binary event."""
    times, is_event, group = event_arrays(dataset, threshold, arms)
    if not (group == 0).any() or not (group == 1).any():
        raise DataValidationError("both arms need at least one patient")
    return z_test("logrank", logrank_contributions(times, is_event, group))


def survival_csv(curve: SurvivalCurve) -> str:
    """``time,survival,at_risk,events,censored`` rows at every event or censor time."""
    steps = {s.time: s for s in curve.steps}
    marks = dict(curve.censor_marks)
    lines = ["time,survival,at_risk,events,censored"]
    s = 1.0
    remaining = curve.n_patients
    for t in sorted(set(steps) | set(marks)):
        if t in steps:
            s = steps[t].survival
        events = steps[t].events if t in steps else 0
        censored = marks.get(t, 0)
        lines.append(f"{t},{s!r},{remaining},{events},{censored}")
        remaining -= events + censored
    return "\n".join(lines) + "\n"


def binary_dataset(dataset: TrialDataset, threshold: int) -> TrialDataset:
    """Recode to a 0/1 scale that stops at the first event.

    Used to run the weighted test on KM-style data, where it reduces to the
    ordinary logrank test.
    """
    _check_threshold(threshold, dataset.scale)
    trajectories = []
    for traj in dataset.trajectories:
        t, status = binary_event_transform(traj, threshold)
        scores = (0,) * t + ((1,) if status == EVENT else (0,))
        trajectories.append(Trajectory(traj.patient_id, traj.arm, scores))
    return TrialDataset(OrdinalScale(0, 1), tuple(trajectories), dataset.time_unit, True)
