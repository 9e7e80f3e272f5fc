"""Simulation-based p-value for the weighted logrank statistic.

A discrete-time Markov chain is fitted to all patients pooled across arms,
so it knows nothing about treatment. Trials regenerated from it, with each
patient's arm, baseline and follow-up length kept, form the null distribution
of Z^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curve import _require_normalized, change_values
from .data import DataValidationError, TrialDataset, from_arrays
from .results import TestResult
from .rng import stream
from .simulate import run_chain
from .weighted_logrank import weighted_logrank, weighted_z_dense

NULL_QUANTILES = (0.5, 0.9, 0.95, 0.99)
CHUNK = 64


@dataclass(frozen=True)
class TransitionModel:
    transition_matrix: np.ndarray
    counts: np.ndarray
    absorbing_max: bool = False

    def __post_init__(self):
        m = self.transition_matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("transition matrix must be square")
        if (m < 0).any() or (m > 1).any():
            raise ValueError("transition probabilities must lie in [0, 1]")
        if not np.allclose(m.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("transition matrix rows must sum to 1")

    @property
    def state_count(self) -> int:
        return self.transition_matrix.shape[0]


def transition_counts(scores: np.ndarray, observed: np.ndarray, k: int) -> np.ndarray:
    both = observed[:, 1:]
    src = scores[:, :-1][both]
    dst = scores[:, 1:][both]
    return np.bincount(src * k + dst, minlength=k * k).reshape(k, k)


def fit_transitions(dataset: TrialDataset) -> TransitionModel:
    """Maximum likelihood one-step transition matrix, pooled over all patients.

    States never left from in the data get an identity row.
    """
    _require_normalized(dataset)
    k = dataset.scale.range + 1
    scores, observed, _ = dataset._dense
    counts = transition_counts(scores, observed, k)
    if counts.sum() == 0:
        raise DataValidationError("no adjacent observation pairs to fit transitions from")
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        mat = np.where(totals > 0, counts / np.where(totals > 0, totals, 1), 0.0)
    empty = totals[:, 0] == 0
    mat[empty, empty] = 1.0
    return TransitionModel(mat, counts, dataset.censor_at_max)


def _template_arrays(template: TrialDataset, arms):
    scores, observed, group = template.dense(arms)
    lengths = observed.sum(axis=1)
    return scores[:, 0], lengths, group


def _simulate_paths(model: TransitionModel, start, lengths, seed, index, top):
    steps = int(lengths.max()) - 1
    draws = stream(seed, index).random((len(start), steps))
    cumulative = np.broadcast_to(np.cumsum(model.transition_matrix, axis=1), (len(start), top + 1, top + 1))
    return run_chain(draws, cumulative, start, lengths, top if model.absorbing_max else None)


def simulate_null_trial(
    model: TransitionModel,
    template: TrialDataset,
    seed: int | None,
    arms: Sequence[str] | None = None,
    index: int = 0,
) -> TrialDataset:
    """Regenerate every template patient's path from the pooled chain.

    Arm labels, starting scores and follow-up lengths come from the template;
    a path also stops at the top score when the model is absorbing there.
    """
    if model.state_count != template.scale.range + 1:
        raise ValueError("model and template scales differ")
    a, b = template.resolve_arms(arms)
    start, lengths, group = _template_arrays(template, (a, b))
    scores, lengths = _simulate_paths(model, start, lengths, seed, index, template.scale.range)
    keep = [t for t in template.trajectories if t.arm in (a, b)]
    return from_arrays(
        scores, lengths, [t.arm for t in keep], template.scale,
        time_unit=template.time_unit, censor_at_max=template.censor_at_max,
        ids=[t.patient_id for t in keep],
    )


def null_statistics(
    model: TransitionModel,
    template: TrialDataset,
    n_sims: int,
    seed: int | None,
    arms: Sequence[str] | None = None,
) -> np.ndarray:
    """Z^2 for ``n_sims`` null trials; simulation k uses stream (seed, k).

    Trials with zero weighted variance score 0.
    """
    top = template.scale.range
    r = top
    start, lengths, group = _template_arrays(template, arms)
    n = len(start)
    width = int(lengths.max())
    n_vals = len(change_values(r))
    out = np.empty(n_sims)
    for lo in range(0, n_sims, CHUNK):
        hi = min(lo + CHUNK, n_sims)
        s = hi - lo
        scores = np.empty((s, n, width), dtype=np.int64)
        obs_len = np.empty((s, n), dtype=np.int64)
        for k in range(lo, hi):
            sc, ln = _simulate_paths(model, start, lengths, seed, k, top)
            scores[k - lo], obs_len[k - lo] = sc, ln
        observed = np.arange(width) < obs_len[..., None]
        counts, at_risk, censored = _batch_change_counts(scores, observed, group, r, n_vals)
        z = weighted_z_dense(counts, at_risk, censored, r)
        out[lo:hi] = np.where(np.isnan(z), 0.0, z * z)
    return out


def _batch_change_counts(scores, observed, group, r, n_vals):
    s, n, width = scores.shape
    steps = width - 1
    both = observed[..., 1:]
    delta = scores[..., 1:] - scores[..., :-1] + r
    sim = np.arange(s)[:, None, None]
    jj = np.arange(steps)[None, None, :]
    gg = group[None, :, None]
    cell = (sim * steps + jj) * 2 + gg
    counts = np.bincount(
        (cell * n_vals + delta)[both], minlength=s * steps * 2 * n_vals
    ).reshape(s, steps, 2, n_vals)
    at_risk = np.bincount(
        np.broadcast_to(cell, both.shape)[observed[..., :-1]], minlength=s * steps * 2
    ).reshape(s, steps, 2)
    censored = at_risk - counts.sum(axis=-1)
    return counts, at_risk, censored


def computational_pvalue(
    dataset: TrialDataset,
    n_sims: int = 1000,
    seed: int | None = None,
    arms: Sequence[str] | None = None,
    model: TransitionModel | None = None,
) -> TestResult:
    """Monte Carlo p-value: (1 + #{null Z^2 >= observed Z^2}) / (1 + n_sims)."""
    if n_sims < 100:
        raise ValueError("n_sims must be at least 100")
    arms = dataset.resolve_arms(arms)
    observed = weighted_logrank(dataset, arms)
    extra = {"n_sims": n_sims, "seed": seed}
    if observed.degenerate:
        extra["null_quantiles"] = {}
        return TestResult("wta-sim", 0.0, 1.0, observed.contributions, True, extra)
    if model is None:
        model = fit_transitions(dataset)
    null = null_statistics(model, dataset, n_sims, seed, arms)
    t_obs = observed.chi_square
    p = (1 + int(np.count_nonzero(null >= t_obs))) / (1 + n_sims)
    extra["null_quantiles"] = {
        str(q): float(v) for q, v in zip(NULL_QUANTILES, np.quantile(null, NULL_QUANTILES))
    }
    return TestResult("wta-sim", observed.z, p, observed.contributions, False, extra)
