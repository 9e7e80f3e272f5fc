"""Stochastic two-arm trial generators.

The "hazard ratio" of both models is a per-step probability multiplier
applied to the control arm: worsening probabilities are multiplied by it and
improvement probabilities divided by it. It is not a proportional-hazards
parameter.

Arm ``"0"`` is control and arm ``"1"`` is treatment. ``duration`` counts the
time points a patient is scheduled to be observed (time 0 included); a
duration of 0 still records the baseline.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import OrdinalScale, TrialDataset, from_arrays
from .rng import stream

log = logging.getLogger(__name__)

CONTROL, TREATMENT = "0", "1"


def _check_n(n: int) -> None:
    if n < 2 or n % 2:
        raise ValueError(f"n_patients must be an even integer >= 2, got {n}")


def balanced_groups(rng: np.random.Generator, n: int) -> np.ndarray:
    """Exactly n/2 zeros (control) and n/2 ones (treatment) in random order."""
    groups = np.repeat(np.array([0, 1]), n // 2)
    rng.shuffle(groups)
    return groups


@dataclass(frozen=True)
class ToxicitySimConfig:
    n_patients: int
    hazard_ratio: float = 1.0
    base_up: float = 0.10
    base_down: float = 0.05
    max_duration: int = 50
    max_grade: int = 4
    seed: int | None = None

    def __post_init__(self):
        _check_n(self.n_patients)
        if self.hazard_ratio < 1.0:
            raise ValueError("hazard_ratio must be >= 1.0")
        if not (0 <= self.base_up <= 1 and 0 <= self.base_down <= 1):
            raise ValueError("base probabilities must lie in [0, 1]")
        if self.base_up * self.hazard_ratio > 1.0:
            raise ValueError(
                f"base_up * hazard_ratio = {self.base_up * self.hazard_ratio} exceeds 1"
            )
        if self.max_duration < 0 or self.max_grade < 1:
            raise ValueError("max_duration must be >= 0 and max_grade >= 1")


def simulate_toxicity_trial(config: ToxicitySimConfig, seed: int | None = None) -> TrialDataset:
    """Daily toxicity grades that move at most one grade per day.

    Each day a patient first risks exacerbation; only if that does not happen
    and the grade is above 0 can they recover. Follow-up ends at the drawn
    duration or on reaching the top grade, whichever comes first.
    """
    rng = stream(config.seed if seed is None else seed)
    n = config.n_patients
    groups = balanced_groups(rng, n)
    durations = rng.integers(0, config.max_duration + 1, size=n)
    steps = max(config.max_duration - 1, 0)
    draws = rng.random((n, steps, 2))

    hr = config.hazard_ratio
    p_up = np.where(groups == 0, config.base_up * hr, config.base_up)
    p_down = np.where(groups == 0, config.base_down / hr, config.base_down)

    lengths = np.maximum(durations, 1)
    scores = np.zeros((n, steps + 1), dtype=np.int64)
    state = np.zeros(n, dtype=np.int64)
    for t in range(1, steps + 1):
        active = t < lengths
        if not active.any():
            break
        up = draws[:, t - 1, 0] < p_up
        down = ~up & (state > 0) & (draws[:, t - 1, 1] < p_down)
        state = np.where(active, state + up - down, state)
        scores[:, t] = state
        dead = active & (state == config.max_grade)
        lengths = np.where(dead, t + 1, lengths)

    arms = [CONTROL if g == 0 else TREATMENT for g in groups]
    return from_arrays(
        scores, lengths, arms, OrdinalScale(0, config.max_grade),
        time_unit="days", censor_at_max=True,
    )


DEFAULT_STEP_PROBS = {1: 0.10, 2: 0.03, -1: 0.05, -2: 0.015}


@dataclass(frozen=True)
class SchizophreniaSimConfig:
    n_patients: int
    hazard_ratio: float = 1.0
    max_stage: int = 6
    start_stage: int = 2
    min_duration: int = 36
    max_duration: int = 84
    step_probs: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_STEP_PROBS))
    seed: int | None = None

    def __post_init__(self):
        _check_n(self.n_patients)
        if self.hazard_ratio < 1.0:
            raise ValueError("hazard_ratio must be >= 1.0")
        if not (0 <= self.start_stage < self.max_stage):
            raise ValueError("start_stage must lie below max_stage")
        if not (1 <= self.min_duration <= self.max_duration):
            raise ValueError("need 1 <= min_duration <= max_duration")
        for k, p in self.step_probs.items():
            if k == 0 or abs(k) >= self.max_stage:
                raise ValueError(f"invalid step {k}")
            if not 0 <= p <= 1:
                raise ValueError(f"step probability {p} for step {k} outside [0, 1]")
        if sum(self.step_probs.values()) > 1:
            raise ValueError("non-zero step probabilities sum above 1")

    def arm_step_probs(self, control: bool) -> dict[int, float]:
        hr = self.hazard_ratio if control else 1.0
        probs = {k: (p * hr if k > 0 else p / hr) for k, p in self.step_probs.items()}
        total = sum(probs.values())
        if total > 1:
            warnings.warn(
                f"step probabilities sum to {total:.3f} after hazard scaling; renormalizing",
                stacklevel=2,
            )
            probs = {k: p / total for k, p in probs.items()}
        return probs

    def transition_matrix(self, control: bool) -> np.ndarray:
        """Per-month stage transition matrix with boundary truncation.

        A step that would leave the scale moves its mass to the largest step
        in the same direction that stays inside, or to no change if none does.
        The top stage is absorbing.
        """
        top = self.max_stage
        probs = self.arm_step_probs(control)
        mat = np.zeros((top + 1, top + 1))
        for s in range(top):
            for k, p in probs.items():
                target = min(max(s + k, 0), top)
                mat[s, target] += p
            mat[s, s] += 1.0 - sum(probs.values())
        mat[top, top] = 1.0
        return mat


def run_chain(
    draws: np.ndarray,
    cumulative: np.ndarray,
    start: np.ndarray,
    lengths: np.ndarray,
    absorbing: int | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance Markov chains with one uniform draw per step.

    ``cumulative[i]`` is patient i's row-cumulative transition matrix. Each
    patient runs until ``lengths[i]`` time points are recorded, or stops on
    entering ``absorbing``. Returns (scores, recorded lengths).
    """
    n, steps = draws.shape
    lengths = lengths.copy()
    state = start.astype(np.int64).copy()
    scores = np.empty((n, steps + 1), dtype=np.int64)
    scores[:, 0] = state
    rows = np.arange(n)
    if absorbing is not None:
        lengths = np.where(state == absorbing, 1, lengths)
    for t in range(1, steps + 1):
        active = t < lengths
        if not active.any():
            scores[:, t:] = state[:, None]
            break
        cum = cumulative[rows, state]
        nxt = (draws[:, t - 1, None] >= cum[:, :-1]).sum(axis=1)
        state = np.where(active, nxt, state)
        scores[:, t] = state
        if absorbing is not None:
            lengths = np.where(active & (state == absorbing), t + 1, lengths)
    return scores, lengths


def simulate_schizophrenia_trial(
    config: SchizophreniaSimConfig, seed: int | None = None
) -> TrialDataset:
    """Monthly symptom stages allowing jumps of up to two stages."""
    rng = stream(config.seed if seed is None else seed)
    n = config.n_patients
    groups = balanced_groups(rng, n)
    lengths = rng.integers(config.min_duration, config.max_duration + 1, size=n)
    steps = config.max_duration - 1
    draws = rng.random((n, steps))
    mats = np.stack([config.transition_matrix(True), config.transition_matrix(False)])
    cumulative = np.cumsum(mats, axis=2)[groups]
    start = np.full(n, config.start_stage)
    scores, lengths = run_chain(draws, cumulative, start, lengths, config.max_stage)
    arms = [CONTROL if g == 0 else TREATMENT for g in groups]
    return from_arrays(
        scores, lengths, arms, OrdinalScale(0, config.max_stage),
        time_unit="months", censor_at_max=True,
    )


MODELS = {
    "toxicity": (ToxicitySimConfig, simulate_toxicity_trial),
    "schizophrenia": (SchizophreniaSimConfig, simulate_schizophrenia_trial),
}
MODEL_ALIASES = {"tox": "toxicity", "scz": "schizophrenia"}


def simulate(model: str, n: int, hr: float, seed: int | None) -> TrialDataset:
    name = MODEL_ALIASES.get(model, model)
    if name not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    config_cls, fn = MODELS[name]
    return fn(config_cls(n_patients=n, hazard_ratio=hr), seed)
