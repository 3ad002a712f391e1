"""Likelihood-ratio-based comparison of ML-fitted models.

The casewise log-likelihood ratios d_i = l_A(x_i) - l_B(x_i) drive every
statistic here:

* omega_hat_squared: their per-observation variance (divisor n).
* distinguishability test: n * omega^2 against a weighted chi-square whose
  weights are the squared eigenvalues of the block matrix W built from
  casewise scores and average Hessians of both fits.
* non-nested LRT: z = sqrt(n) * mean(d) / omega, standard normal under
  equal fit of distinguishable models; positive z favors the first model.
* nested tests: the same statistics with unsquared eigenvalue weights for
  the LR statistic, alongside the classical chi-square difference test.
* IC-difference confidence interval: (IC_A - IC_B) +/- z * sqrt(4 n omega^2).

sequential_compare chains the distinguishability test and the LRT into a
single decision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .sem import FitError, FittedModel, casewise_scores, information_criteria
from .wchisq import WeightedChiSq

__all__ = [
    "ComparisonResult",
    "DegenerateComparisonError",
    "distinguishability_test",
    "ic_difference_ci",
    "nested_tests",
    "nonnested_lrt",
    "omega_hat_squared",
    "sequential_compare",
    "w_matrix",
]

_U_COND_LIMIT = 1e12
_DEGENERATE_OMEGA = 1e-12
_DECISIONS = (
    "equivalent-fit-indistinguishable",
    "prefer-A",
    "prefer-B",
    "no-preference",
)


class DegenerateComparisonError(RuntimeError):
    """Raised when the casewise likelihood ratios have zero variance."""


@dataclass(frozen=True)
class ComparisonResult:
    """Full output of the sequential comparison procedure."""

    omega_hat_sq: float
    lr_ab: float
    w_eigenvalues: np.ndarray
    p_distinguish: float
    z_lrt: Optional[float]
    p_lrt_two_sided: Optional[float]
    p_lrt_one_sided: Optional[float]
    p_nested_variance: Optional[float]
    p_nested_lr: Optional[float]
    ic_diff: tuple
    ic_ci: tuple
    decision: str
    lrt_applicable: bool
    n: int
    k: int
    q: int
    alpha1: float
    alpha2: float
    variant: str
    criterion: str


# -- core estimators ---------------------------------------------------


def omega_hat_squared(ll_a, ll_b, *, bessel: bool = False) -> float:
    """Per-observation variance of the casewise log-likelihood ratios.

    Divides by n; pass bessel=True for the n-1 alternative.
    """
    ll_a = np.asarray(ll_a, dtype=float).ravel()
    ll_b = np.asarray(ll_b, dtype=float).ravel()
    if ll_a.shape != ll_b.shape:
        raise ValueError(
            f"casewise vectors differ in length ({ll_a.size} vs {ll_b.size})"
        )
    n = ll_a.size
    if n < 2:
        raise ValueError("need at least two cases")
    d = ll_a - ll_b
    out = float(np.mean(d * d) - np.mean(d) ** 2)
    out = max(out, 0.0)
    if bessel:
        out *= n / (n - 1)
    return out


def w_matrix(u_a, u_b, scores_a, scores_b) -> np.ndarray:
    """Assemble the (k+q) x (k+q) block matrix whose eigenvalues weight the
    limiting distributions.

    u_a, u_b are the average casewise Hessians (negative definite near a
    maximum); scores_* are n x k casewise score matrices from fits on the
    same data in the same case order.
    """
    scores_a = np.asarray(scores_a, dtype=float)
    scores_b = np.asarray(scores_b, dtype=float)
    u_a = np.asarray(u_a, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    if scores_a.shape[0] != scores_b.shape[0]:
        raise ValueError("score matrices must cover the same cases")
    n = scores_a.shape[0]
    for name, u_mat in (("first", u_a), ("second", u_b)):
        cond = np.linalg.cond(u_mat)
        if not np.isfinite(cond) or cond > _U_COND_LIMIT:
            raise FitError(
                f"average Hessian of the {name} model is numerically singular "
                f"(cond={cond:.2e}); check that the model is identified"
            )
    v_a = scores_a.T @ scores_a / n
    v_b = scores_b.T @ scores_b / n
    v_ab = scores_a.T @ scores_b / n
    u_a_inv = np.linalg.inv(u_a)
    u_b_inv = np.linalg.inv(u_b)
    return np.block([
        [-v_a @ u_a_inv, -v_ab @ u_b_inv],
        [v_ab.T @ u_a_inv, v_b @ u_b_inv],
    ])


def _real_eigenvalues(w_mat) -> np.ndarray:
    """Eigenvalues of the nonsymmetric W; theory implies a real spectrum,
    so complex parts beyond roundoff trigger a warning."""
    eig = np.linalg.eigvals(w_mat)
    radius = float(np.abs(eig).max()) if eig.size else 0.0
    if radius > 0 and float(np.abs(eig.imag).max()) > 1e-8 * radius:
        warnings.warn(
            "eigenvalues of W have non-negligible imaginary parts; "
            "using real parts",
            UserWarning,
            stacklevel=3,
        )
    real = np.real(eig)
    return real[np.argsort(-np.abs(real), kind="stable")]


# -- helpers over fitted models ----------------------------------------


def _loglik_vector(fit, data) -> np.ndarray:
    ll = np.asarray(fit.loglik_casewise, dtype=float)
    if data is not None and ll.size != data.n:
        raise ValueError(
            f"fit covers {ll.size} cases but data has {data.n}; "
            "comparisons require fits on the same dataset"
        )
    return ll


def _score_matrix(fit, data) -> np.ndarray:
    if isinstance(fit, FittedModel):
        return casewise_scores(fit, data)
    return np.asarray(fit.scores, dtype=float)


def _u_matrix(fit, use_expected_info: bool) -> np.ndarray:
    if use_expected_info:
        return -np.asarray(fit.expected_info, dtype=float)
    return np.asarray(fit.unit_hessian, dtype=float)


def _eigenvalues_for(fit_a, fit_b, data, use_expected_info):
    w_mat = w_matrix(
        _u_matrix(fit_a, use_expected_info),
        _u_matrix(fit_b, use_expected_info),
        _score_matrix(fit_a, data),
        _score_matrix(fit_b, data),
    )
    return _real_eigenvalues(w_mat)


# -- tests -------------------------------------------------------------


def distinguishability_test(fit_a, fit_b, data, *,
                            use_expected_info: bool = False):
    """Variance test of whether the two models can be told apart.

    Returns (stat, eigenvalues, p) with stat = n * omega_hat_squared and p
    the upper tail under the weighted chi-square with squared-eigenvalue
    weights.  Rejection means the models are distinguishable.
    """
    ll_a = _loglik_vector(fit_a, data)
    ll_b = _loglik_vector(fit_b, data)
    n = ll_a.size
    omega_sq = omega_hat_squared(ll_a, ll_b)
    stat = n * omega_sq
    eig = _eigenvalues_for(fit_a, fit_b, data, use_expected_info)
    if omega_sq <= _DEGENERATE_OMEGA:
        warnings.warn(
            "casewise likelihoods are (numerically) identical; models are "
            "indistinguishable on these data",
            UserWarning,
            stacklevel=2,
        )
        return 0.0, eig, 1.0
    weights = eig**2
    p = WeightedChiSq(weights).upper_p(stat)
    return float(stat), eig, float(p)


def nonnested_lrt(fit_a, fit_b, data):
    """Normal-theory LRT for non-nested, distinguishable models.

    Returns (z, p_one, p_two).  Positive z favors the first model; p_one
    is the one-sided tail in the direction of the observed sign.
    """
    ll_a = _loglik_vector(fit_a, data)
    ll_b = _loglik_vector(fit_b, data)
    n = ll_a.size
    omega_sq = omega_hat_squared(ll_a, ll_b)
    if omega_sq <= _DEGENERATE_OMEGA:
        raise DegenerateComparisonError(
            "casewise likelihood ratios have zero variance; run the "
            "distinguishability test before interpreting the LRT"
        )
    lr = float((ll_a - ll_b).sum()) / np.sqrt(n)
    z = lr / np.sqrt(omega_sq)
    p_one = float(stats.norm.sf(abs(z)))
    p_two = 2.0 * p_one
    return float(z), p_one, min(p_two, 1.0)


def nested_tests(fit_full, fit_restricted, data, *,
                 use_expected_info: bool = False):
    """Nested-model tests robust to misspecification, plus the classical
    chi-square difference test.

    Returns (p_variance_stat, p_lr_stat, p_classical).  The caller asserts
    nesting; it is not checked structurally.
    """
    k = fit_full.k
    q = fit_restricted.k
    if k <= q:
        raise ValueError(
            f"full model must have more free parameters than the restricted "
            f"one (k={k}, q={q})"
        )
    ll_full = _loglik_vector(fit_full, data)
    ll_rest = _loglik_vector(fit_restricted, data)
    n = ll_full.size
    omega_sq = omega_hat_squared(ll_full, ll_rest)
    eig = _eigenvalues_for(fit_full, fit_restricted, data, use_expected_info)
    lr_stat = 2.0 * float((ll_full - ll_rest).sum())
    p_classical = float(stats.chi2(k - q).sf(max(lr_stat, 0.0)))
    if omega_sq <= _DEGENERATE_OMEGA:
        warnings.warn(
            "casewise likelihoods are (numerically) identical; weighted "
            "nested tests are degenerate",
            UserWarning,
            stacklevel=2,
        )
        return 1.0, 1.0, p_classical
    p_variance = float(WeightedChiSq(eig**2).upper_p(n * omega_sq))
    p_lr = float(WeightedChiSq(eig).upper_p(lr_stat))
    return p_variance, p_lr, p_classical


def ic_difference_ci(fit_a, fit_b, data, alpha: float = 0.10,
                     criterion: str = "bic"):
    """Confidence interval for the information-criterion difference.

    Center IC_A - IC_B, half-width z_{1-alpha/2} * sqrt(4 n omega_hat^2).
    The penalty terms are deterministic, so AIC and BIC intervals share
    the same width.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    crit = criterion.lower()
    if crit not in ("aic", "bic"):
        raise ValueError(f"criterion must be 'aic' or 'bic', got {criterion!r}")
    ll_a = _loglik_vector(fit_a, data)
    ll_b = _loglik_vector(fit_b, data)
    n = ll_a.size
    aic_a, bic_a = information_criteria(fit_a)
    aic_b, bic_b = information_criteria(fit_b)
    center = (aic_a - aic_b) if crit == "aic" else (bic_a - bic_b)
    omega_sq = omega_hat_squared(ll_a, ll_b)
    if omega_sq <= _DEGENERATE_OMEGA:
        warnings.warn(
            "models are indistinguishable on these data; the interval is "
            "degenerate and should not be interpreted",
            UserWarning,
            stacklevel=2,
        )
        return (center, center)
    half = stats.norm.ppf(1.0 - alpha / 2.0) * np.sqrt(4.0 * n * omega_sq)
    return (float(center - half), float(center + half))


def sequential_compare(fit_a, fit_b, data, *, alpha1: float = 0.05,
                       alpha2: float = 0.05, variant: str = "non-nested",
                       criterion: str = "bic", ci_level: float = 0.90,
                       use_expected_info: bool = False) -> ComparisonResult:
    """Distinguishability test first, then the likelihood-ratio test.

    If the distinguishability test does not reject at alpha1 the decision
    is "equivalent-fit-indistinguishable" and the LRT is reported with
    lrt_applicable=False.  Otherwise the LRT at alpha2 decides "prefer-A",
    "prefer-B", or "no-preference".  The nested variant uses the weighted
    LR test (one-directional: the full model is fit_a) for the second
    stage and surfaces the nested p-values.
    """
    if variant not in ("non-nested", "nested"):
        raise ValueError(f"variant must be 'non-nested' or 'nested', got {variant!r}")
    ll_a = _loglik_vector(fit_a, data)
    ll_b = _loglik_vector(fit_b, data)
    n = ll_a.size
    omega_sq = omega_hat_squared(ll_a, ll_b)
    stat, eig, p_dist = distinguishability_test(
        fit_a, fit_b, data, use_expected_info=use_expected_info
    )
    lr = float((ll_a - ll_b).sum()) / np.sqrt(n)

    degenerate = omega_sq <= _DEGENERATE_OMEGA
    if degenerate:
        z = p_one = p_two = None
    else:
        z, p_one, p_two = nonnested_lrt(fit_a, fit_b, data)

    p_nested_variance = p_nested_lr = None
    if variant == "nested":
        p_nested_variance, p_nested_lr, _ = nested_tests(
            fit_a, fit_b, data, use_expected_info=use_expected_info
        )

    aic_a, bic_a = information_criteria(fit_a)
    aic_b, bic_b = information_criteria(fit_b)
    with warnings.catch_warnings():
        if degenerate:
            warnings.simplefilter("ignore", UserWarning)
        ci = ic_difference_ci(fit_a, fit_b, data, alpha=1.0 - ci_level,
                              criterion=criterion)

    if p_dist >= alpha1 or degenerate:
        decision = "equivalent-fit-indistinguishable"
        lrt_applicable = False
    else:
        lrt_applicable = True
        if variant == "nested":
            decision = "prefer-A" if p_nested_lr < alpha2 else "no-preference"
        elif p_two < alpha2:
            decision = "prefer-A" if z > 0 else "prefer-B"
        else:
            decision = "no-preference"
    assert decision in _DECISIONS

    return ComparisonResult(
        omega_hat_sq=float(omega_sq),
        lr_ab=lr,
        w_eigenvalues=eig,
        p_distinguish=float(p_dist),
        z_lrt=z,
        p_lrt_two_sided=p_two,
        p_lrt_one_sided=p_one,
        p_nested_variance=p_nested_variance,
        p_nested_lr=p_nested_lr,
        ic_diff=(float(aic_a - aic_b), float(bic_a - bic_b)),
        ic_ci=ci,
        decision=decision,
        lrt_applicable=lrt_applicable,
        n=int(n),
        k=int(fit_a.k),
        q=int(fit_b.k),
        alpha1=float(alpha1),
        alpha2=float(alpha2),
        variant=variant,
        criterion=criterion.lower(),
    )
