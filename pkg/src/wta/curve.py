"""Weighted health-status trajectories and per-timepoint change tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataValidationError, TrialDataset


@dataclass(frozen=True)
class CurveStep:
    time: int
    u: float
    at_risk: int
    net_change: int


@dataclass(frozen=True)
class WeightedTrajectoryCurve:
    arm: str
    initial_weight: int
    steps: tuple[CurveStep, ...]
    censor_marks: tuple[tuple[int, int], ...]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.steps])

    @property
    def u(self) -> np.ndarray:
        return np.array([s.u for s in self.steps])

    def closed_form_u(self) -> np.ndarray:
        """U_j recomputed from the cumulative net change instead of step by step."""
        cum = np.concatenate([[0], np.cumsum([s.net_change for s in self.steps[:-1]])])
        return 1.0 - cum / self.initial_weight


@dataclass(frozen=True)
class ChangeTable:
    """Counts of each possible score change between times j and j+1, by arm.

    ``at_risk_*`` counts patients observed at j; ``censored_*`` those among
    them with no observation at j+1, who fall in no change bucket.
    """

    time: int
    changes: tuple[int, ...]
    counts_a: tuple[int, ...]
    counts_b: tuple[int, ...]
    at_risk_a: int
    at_risk_b: int
    censored_a: int = 0
    censored_b: int = 0

    def __post_init__(self):
        if not (len(self.changes) == len(self.counts_a) == len(self.counts_b)):
            raise ValueError("changes and counts must have equal length")
        if sum(self.counts_a) + self.censored_a != self.at_risk_a:
            raise ValueError("arm A counts plus censored must equal at-risk")
        if sum(self.counts_b) + self.censored_b != self.at_risk_b:
            raise ValueError("arm B counts plus censored must equal at-risk")

    @property
    def margins(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.counts_a, self.counts_b))

    @property
    def at_risk(self) -> int:
        return self.at_risk_a + self.at_risk_b

    @classmethod
    def from_counts(cls, time, changes, counts_a, counts_b, censored_a=0, censored_b=0):
        return cls(
            time, tuple(changes), tuple(counts_a), tuple(counts_b),
            sum(counts_a) + censored_a, sum(counts_b) + censored_b,
            censored_a, censored_b,
        )


def initial_weight(n0: int, r: int) -> int:
    """Starting patient count times the range of the ordinal scale."""
    if n0 < 1 or r < 1:
        raise ValueError(f"initial weight needs n0 >= 1 and r >= 1, got {n0}, {r}")
    return n0 * r


def change_values(r: int) -> tuple[int, ...]:
    return tuple(range(-r, r + 1))


def net_change(dataset: TrialDataset, arm: str, j: int) -> int:
    """Summed score change from j to j+1 over patients observed at both times."""
    if j < 0:
        raise ValueError("time index must be non-negative")
    return sum(
        t.scores[j + 1] - t.scores[j]
        for t in dataset.trajectories
        if t.arm == arm and t.observed_at(j + 1)
    )


def change_counts(
    scores: np.ndarray, observed: np.ndarray, group: np.ndarray, r: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense change tables for every transition j -> j+1.

    Returns ``counts`` of shape (J, 2, 2r+1), ``at_risk`` and ``censored`` of
    shape (J, 2), where J is the number of transitions on the grid.
    """
    n, width = scores.shape
    n_steps = max(width - 1, 0)
    n_vals = 2 * r + 1
    if n_steps == 0:
        return (np.zeros((0, 2, n_vals), np.int64), np.zeros((0, 2), np.int64),
                np.zeros((0, 2), np.int64))
    both = observed[:, 1:]
    delta = scores[:, 1:] - scores[:, :-1] + r
    jj = np.broadcast_to(np.arange(n_steps), (n, n_steps))
    gg = np.broadcast_to(group[:, None], (n, n_steps))
    flat = (jj * 2 + gg) * n_vals + delta
    counts = np.bincount(flat[both], minlength=n_steps * 2 * n_vals).reshape(n_steps, 2, n_vals)
    at_obs = observed[:, :-1]
    flat_g = jj * 2 + gg
    at_risk = np.bincount(flat_g[at_obs], minlength=n_steps * 2).reshape(n_steps, 2)
    censored = at_risk - counts.sum(axis=2)
    return counts, at_risk, censored


def change_tables(dataset: TrialDataset, arms: Sequence[str] | None = None) -> list[ChangeTable]:
    """One table per transition j = 0 .. max_time-1 on the pooled grid."""
    r = dataset.scale.range
    scores, observed, group = dataset.dense(arms)
    counts, at_risk, censored = change_counts(scores, observed, group, r)
    vals = change_values(r)
    return [
        ChangeTable(
            j, vals, tuple(counts[j, 0].tolist()), tuple(counts[j, 1].tolist()),
            int(at_risk[j, 0]), int(at_risk[j, 1]), int(censored[j, 0]), int(censored[j, 1]),
        )
        for j in range(len(counts))
    ]


def _require_normalized(dataset: TrialDataset) -> None:
    if not dataset.scale.is_normalized:
        raise DataValidationError("dataset must be normalized (see normalize_scale)")


def wta_curve(
    dataset: TrialDataset, arms: Sequence[str] | None = None
) -> dict[str, WeightedTrajectoryCurve]:
    """Weighted health status U_j for each arm over the pooled time grid.

    U starts at exactly 1 and drops by the arm's net score change divided by
    n0 * r at each step, so it can rise above 1 when patients improve from a
    nonzero baseline.
    """
    _require_normalized(dataset)
    r = dataset.scale.range
    labels = dataset.arm_labels if arms is None else tuple(arms)
    width = dataset.max_time + 1
    curves = {}
    for label in labels:
        members = dataset.arm(label)
        if not members:
            raise DataValidationError(f"arm {label!r} has no patients")
        w0 = initial_weight(len(members), r)
        d = np.zeros(width, dtype=np.int64)
        at_risk = np.zeros(width, dtype=np.int64)
        ends = np.zeros(width, dtype=np.int64)
        for traj in members:
            s = np.asarray(traj.scores)
            d[: len(s) - 1] += np.diff(s)
            at_risk[: len(s)] += 1
            ends[traj.censor_time] += 1
        steps = []
        u = 1.0
        for j in range(width):
            steps.append(CurveStep(j, u, int(at_risk[j]), int(d[j])))
            u = u - int(d[j]) / w0
        marks = tuple((int(t), int(c)) for t, c in enumerate(ends) if c)
        curves[label] = WeightedTrajectoryCurve(label, w0, tuple(steps), marks)
    return curves


def curve_csv(curves: dict[str, WeightedTrajectoryCurve]) -> str:
    lines = ["arm,time,U,at_risk,net_change,censored"]
    for label, curve in curves.items():
        marks = dict(curve.censor_marks)
        for s in curve.steps:
            lines.append(
                f"{label},{s.time},{s.u!r},{s.at_risk},{s.net_change},{marks.get(s.time, 0)}"
            )
    return "\n".join(lines) + "\n"


def max_identity_error(curve: WeightedTrajectoryCurve) -> float:
    """Largest gap between the iterative and cumulative U, relative to max(1, |U|)."""
    it, cf = curve.u, curve.closed_form_u()
    scale = np.maximum(1.0, np.abs(cf))
    return float(np.max(np.abs(it - cf) / scale)) if len(it) else 0.0
