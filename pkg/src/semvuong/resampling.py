"""Monte Carlo data generation and bootstrap intervals for IC differences.

``simulate_data`` draws multivariate-normal samples from a model's implied
moments at a fixed parameter vector.  ``bootstrap_ic_ci`` forms a
nonparametric percentile interval for the AIC or BIC difference between two
candidate models by refitting both on case resamples, warm-started at the
full-sample estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsl import ModelSpec, param_count
from .sem import Dataset, FitError, _aligned_cases, _fit_to_moments, _suff_stats, implied_moments

__all__ = ["SimConfig", "simulate_data", "bootstrap_ic_ci"]

_MIN_REPS = 100
_MAX_DROP_FRAC = 0.10


@dataclass(frozen=True, eq=False)
class SimConfig:
    """A generating model: spec, true parameter vector, sample size, seed."""

    spec: ModelSpec
    theta_true: np.ndarray
    n: int
    seed: int

    def __post_init__(self):
        theta = np.asarray(self.theta_true, dtype=float)
        object.__setattr__(self, "theta_true", theta)
        k = param_count(self.spec)
        if theta.shape != (k,):
            raise ValueError(
                f"theta_true has shape {theta.shape}, expected ({k},) for this model")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta_true contains non-finite values")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        implied = implied_moments(self.spec, theta)
        try:
            np.linalg.cholesky(implied.sigma)
        except np.linalg.LinAlgError:
            raise ValueError(
                "implied covariance at theta_true is not positive definite") from None


def simulate_data(cfg: SimConfig) -> Dataset:
    """Draw ``cfg.n`` multivariate-normal cases from the implied moments.

    Reproducible: the same config (including seed) yields an identical
    Dataset.  Column order follows the model's manifest order.
    """
    implied = implied_moments(cfg.spec, cfg.theta_true)
    try:
        chol = np.linalg.cholesky(implied.sigma)
    except np.linalg.LinAlgError as exc:
        raise FitError("implied covariance is not positive definite") from exc
    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal((cfg.n, chol.shape[0]))
    cases = implied.mu + z @ chol.T
    return Dataset(cases, list(cfg.spec.manifest_names))


def _penalty(k: int, n: int, criterion: str) -> float:
    return 2.0 * k if criterion == "aic" else k * float(np.log(n))


def bootstrap_ic_ci(spec_a: ModelSpec, spec_b: ModelSpec, data: Dataset,
                    reps: int, alpha: float = 0.10, seed: int = 0, *,
                    criterion: str = "bic", max_iter: int = 500,
                    restarts: int = 1) -> tuple[float, float]:
    """Percentile bootstrap interval for IC(A) - IC(B) at level 1 - alpha.

    Each replicate resamples cases with replacement, refits both models
    warm-started at the full-sample estimates, and records the criterion
    difference.  Replicates where either refit fails to converge are
    dropped; more than 10% dropped is an error.  Replicate RNG streams are
    keyed by (seed, replicate index), so results do not depend on
    execution order.
    """
    if reps < _MIN_REPS:
        raise ValueError(f"reps must be at least {_MIN_REPS}, got {reps}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if criterion not in ("aic", "bic"):
        raise ValueError(f"criterion must be 'aic' or 'bic', got {criterion!r}")

    work_a = _aligned_cases(spec_a, data)
    work_b = _aligned_cases(spec_b, data)
    n = data.n
    k_a = param_count(spec_a)
    k_b = param_count(spec_b)
    pen_a = _penalty(k_a, n, criterion)
    pen_b = _penalty(k_b, n, criterion)

    xb_a, _, s_a = _suff_stats(work_a)
    xb_b, _, s_b = _suff_stats(work_b)
    theta_a0, _, _ = _fit_to_moments(spec_a, xb_a, s_a, n,
                                     max_iter=max_iter, restarts=restarts)
    theta_b0, _, _ = _fit_to_moments(spec_b, xb_b, s_b, n,
                                     max_iter=max_iter, restarts=restarts)

    diffs = []
    dropped = 0
    for rep in range(reps):
        rng = np.random.default_rng([seed, rep])
        idx = rng.integers(0, n, size=n)
        try:
            xb, _, s_rep = _suff_stats(work_a[idx])
            ll_a, ok_a = _refit(spec_a, xb, s_rep, n, theta_a0, max_iter, restarts)
            xb, _, s_rep = _suff_stats(work_b[idx])
            ll_b, ok_b = _refit(spec_b, xb, s_rep, n, theta_b0, max_iter, restarts)
        except FitError:
            dropped += 1
            continue
        if not (ok_a and ok_b):
            dropped += 1
            continue
        diffs.append((-2.0 * ll_a + pen_a) - (-2.0 * ll_b + pen_b))

    if dropped > _MAX_DROP_FRAC * reps:
        raise FitError(
            f"bootstrap refits failed to converge in {dropped} of {reps} "
            f"replicates (more than {_MAX_DROP_FRAC:.0%}); the interval "
            "would be unreliable")

    arr = np.sort(np.asarray(diffs))
    # Order-statistic endpoints: no interpolation between replicate values.
    lo = np.quantile(arr, alpha / 2.0, method="closest_observation")
    hi = np.quantile(arr, 1.0 - alpha / 2.0, method="closest_observation")
    return float(lo), float(hi)


def _refit(spec, xbar, s_mat, n, start, max_iter, restarts):
    theta, ll, converged = _fit_to_moments(spec, xbar, s_mat, n, start=start,
                                           max_iter=max_iter, restarts=restarts)
    return ll, converged
