"""GEE comparator: score ~ intercept + treatment, identity link, AR(1) working
correlation, robust (sandwich) Wald test on the treatment coefficient.

Follow-up is contiguous from time 0, so a cluster's AR(1) correlation matrix
alpha^|t - t'| has a tridiagonal inverse and every quantity the estimating
equations need reduces to per-cluster weighted sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataValidationError, TrialDataset
from .results import TestResult, two_sided_p

ALPHA_BOUND = 0.99


@dataclass(frozen=True)
class GeeFit:
    beta: np.ndarray
    alpha: float
    phi: float
    robust_cov: np.ndarray
    wald: TestResult
    iterations: int
    converged: bool
    score_norm: float

    @property
    def robust_se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.robust_cov))

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "alpha": self.alpha,
            "phi": self.phi,
            "robust_se": self.robust_se.tolist(),
            "wald_z": self.wald.z,
            "wald_chi_square": self.wald.chi_square,
            "wald_p": self.wald.p_value,
            "degenerate": self.wald.degenerate,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def ar1_weights(observed: np.ndarray, alpha: float) -> np.ndarray:
    """Row sums of each cluster's inverse AR(1) correlation matrix.

    For a run of m >= 2 consecutive times the sums are 1/(1+a) at both ends
    and (1-a)/(1+a) inside; a single observation gets weight 1.
    """
    m = observed.sum(axis=1)
    t = np.arange(observed.shape[1])
    w = np.where(observed, (1 - alpha) / (1 + alpha), 0.0)
    ends = observed & ((t == 0) | (t == (m - 1)[:, None]))
    w = np.where(ends, 1 / (1 + alpha), w)
    return np.where((m == 1)[:, None] & observed, 1.0, w)


def _design(group: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(group)), group.astype(float)])


def _moment_estimates(resid, observed, n_params=2):
    n_obs = int(observed.sum())
    phi = float((resid[observed] ** 2).sum()) / max(n_obs - n_params, 1)
    pairs = observed[:, 1:]
    n_pairs = int(pairs.sum())
    if phi <= 0 or n_pairs - n_params <= 0:
        return phi, 0.0
    lag = float((resid[:, 1:] * resid[:, :-1])[pairs].sum())
    alpha = lag / ((n_pairs - n_params) * phi)
    return phi, float(np.clip(alpha, -ALPHA_BOUND, ALPHA_BOUND))


def gee_score(y, observed, z, beta, alpha):
    """Estimating function and its (unscaled) bread at ``beta``."""
    c = ar1_weights(observed, alpha)
    resid = np.where(observed, y - (z @ beta)[:, None], 0.0)
    cr = (c * resid).sum(axis=1)
    a = c.sum(axis=1)
    score = z.T @ cr
    bread = (z * a[:, None]).T @ z
    return score, bread, cr


def fit_gee(
    dataset: TrialDataset,
    arms: Sequence[str] | None = None,
    fixed_alpha: float | None = None,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> GeeFit:
    """Fit the two-parameter GEE and return a robust Wald test for treatment.

    Arm B is coded 1. The working correlation and scale are re-estimated from
    Pearson residuals after each beta update unless ``fixed_alpha`` is set.
    """
    scores, observed, group = dataset.dense(arms)
    for g in (0, 1):
        if (group == g).sum() < 2:
            raise DataValidationError("GEE needs at least two patients per arm")
    y = scores.astype(float)
    z = _design(group)

    # OLS start: per-observation least squares with constant within-cluster covariate
    m = observed.sum(axis=1).astype(float)
    xtx = (z * m[:, None]).T @ z
    xty = z.T @ np.where(observed, y, 0.0).sum(axis=1)
    beta = np.linalg.solve(xtx, xty)
    alpha = 0.0 if fixed_alpha is None else float(fixed_alpha)
    phi = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resid = np.where(observed, y - (z @ beta)[:, None], 0.0)
        phi, alpha_hat = _moment_estimates(resid, observed)
        if fixed_alpha is None:
            alpha = alpha_hat
        score, bread, _ = gee_score(y, observed, z, beta, alpha)
        step = np.linalg.solve(bread, score)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break

    resid = np.where(observed, y - (z @ beta)[:, None], 0.0)
    phi, _ = _moment_estimates(resid, observed)
    score, bread, cr = gee_score(y, observed, z, beta, alpha)
    bread_inv = np.linalg.inv(bread)
    meat = (z * (cr ** 2)[:, None]).T @ z
    robust = bread_inv @ meat @ bread_inv
    robust = (robust + robust.T) / 2
    var_t = robust[1, 1]
    if phi <= 0 or var_t <= 0 or not math.isfinite(var_t):
        wald = TestResult("gee", 0.0, 1.0, degenerate=True)
    else:
        zstat = float(beta[1] / math.sqrt(var_t))
        wald = TestResult("gee", zstat, two_sided_p(zstat))
    return GeeFit(beta, alpha, phi, robust, wald, iterations, converged,
                  float(np.linalg.norm(score)))


def gee_test(dataset: TrialDataset, arms: Sequence[str] | None = None) -> TestResult:
    return fit_gee(dataset, arms).wald
