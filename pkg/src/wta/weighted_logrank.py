"""Analytical weighted logrank test for ordinal score changes.

At each transition j -> j+1 the per-arm counts of every possible change value
are treated, conditional on the table margins, as a multivariate
hypergeometric draw. Weighting each change by its signed size and summing
over time gives a Z statistic analogous to the logrank test.

The risk set of a transition is, by default, the patients whose change is
observed (present at j and j+1). Patients seen at j but censored before j+1
carry no change; ``include_censored=True`` keeps them in the risk set as a
separate zero-weight category instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curve import ChangeTable, _require_normalized, change_counts, change_values
from .data import DataValidationError, TrialDataset
from .results import Contribution, TestResult, z_test


@dataclass(frozen=True)
class MomentSet:
    time: int
    changes: tuple[int, ...]
    expectations: np.ndarray  # E[d^{A,l}] per change value
    covariance: np.ndarray  # Cov(d^{A,l}, d^{A,q})


def _risk_sizes(table: ChangeTable, include_censored: bool) -> tuple[int, int]:
    if include_censored:
        return table.at_risk_a, table.at_risk_b
    return table.at_risk_a - table.censored_a, table.at_risk_b - table.censored_b


def hypergeo_moments(table: ChangeTable, include_censored: bool = False) -> MomentSet:
    """Mean vector and covariance matrix of arm A's change counts under the null."""
    n_a, n_b = _risk_sizes(table, include_censored)
    n = n_a + n_b
    d = np.asarray(table.margins, dtype=float)
    size = len(d)
    if n <= 1:
        return MomentSet(table.time, table.changes, np.zeros(size), np.zeros((size, size)))
    e = n_a * d / n
    c = n_a * n_b / (n * n * (n - 1.0))
    cov = -c * np.outer(d, d)
    cov[np.diag_indices(size)] = c * (n - d) * d
    return MomentSet(table.time, table.changes, e, cov)


def weighted_contribution(
    table: ChangeTable, include_censored: bool = False
) -> tuple[float, float, float]:
    """Observed, expected and variance of arm A's weighted change at one time."""
    m = hypergeo_moments(table, include_censored)
    w = np.asarray(table.changes, dtype=float)
    n_a, n_b = _risk_sizes(table, include_censored)
    if n_a + n_b <= 1:
        return 0.0, 0.0, 0.0
    observed = float(w @ np.asarray(table.counts_a, dtype=float))
    expected = float(w @ m.expectations)
    variance = float(w @ m.covariance @ w)
    return observed, expected, variance


def weighted_moments_dense(
    counts: np.ndarray,
    at_risk: np.ndarray,
    censored: np.ndarray,
    r: int,
    include_censored: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (O, E, V) over arrays shaped ``(..., J, 2, L)`` and ``(..., J, 2)``.

    Leading batch axes are allowed so many simulated trials are scored at once.
    """
    w = np.asarray(change_values(r), dtype=float)
    sizes = at_risk if include_censored else at_risk - censored
    n_a = sizes[..., 0].astype(float)
    n_b = sizes[..., 1].astype(float)
    n = n_a + n_b
    d = counts.sum(axis=-2).astype(float)
    informative = n > 1
    safe_n = np.where(informative, n, 2.0)
    c = np.where(informative, n_a * n_b / (safe_n * safe_n * (safe_n - 1.0)), 0.0)
    observed = np.where(informative, counts[..., 0, :] @ w, 0.0)
    expected = np.where(informative, n_a / safe_n * (d @ w), 0.0)
    # full L x L covariance, zero-change bucket included
    cov = -np.einsum("...l,...q->...lq", d, d)
    idx = np.arange(d.shape[-1])
    cov[..., idx, idx] += safe_n[..., None] * d
    cov *= c[..., None, None]
    variance = np.einsum("l,...lq,q->...", w, cov, w)
    return observed, expected, variance


def weighted_z_dense(counts, at_risk, censored, r, include_censored=False) -> np.ndarray:
    """Z statistics for a batch of trials; degenerate trials give NaN."""
    o, e, v = weighted_moments_dense(counts, at_risk, censored, r, include_censored)
    num = (o - e).sum(axis=-1)
    den = v.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.sqrt(np.where(den > 0, den, 1.0)), np.nan)


def weighted_logrank(
    dataset: TrialDataset,
    arms: Sequence[str] | None = None,
    include_censored: bool = False,
) -> TestResult:
    """Two-sided weighted logrank test of arm A against arm B."""
    _require_normalized(dataset)
    scores, observed, group = dataset.dense(arms)
    if not (group == 0).any() or not (group == 1).any():
        raise DataValidationError("both arms need at least one patient")
    r = dataset.scale.range
    counts, at_risk, censored = change_counts(scores, observed, group, r)
    o, e, v = weighted_moments_dense(counts, at_risk, censored, r, include_censored)
    contributions = [
        Contribution(j, float(o[j]), float(e[j]), float(v[j]))
        for j in range(len(o))
        if counts[j].any()
    ]
    return z_test("wta", contributions)


__all__ = [
    "MomentSet",
    "hypergeo_moments",
    "weighted_contribution",
    "weighted_logrank",
    "weighted_moments_dense",
    "weighted_z_dense",
]
