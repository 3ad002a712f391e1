"""Simulation studies of model-comparison statistics.

Three study designs, each run over a grid of sample sizes and effect
sizes with per-replicate RNG streams keyed by (seed, study, condition,
replicate) so that summaries are reproducible regardless of scheduling:

1. Two overlapping two-factor models that differ in a single
   cross-loading; power of the distinguishability test and the
   model-selection LRT, plus coverage of BIC-difference intervals.
2. Three non-nested path models over nine observed variables fit to data
   from a fourth; analytic and bootstrap BIC-difference intervals are
   summarized by coverage, mean width, and endpoint variability.
3. A nested pair (three residual covariances free or fixed to zero);
   the variance test and model-selection LRT are compared with the
   classical chi-square difference test.

Interval coverage is judged against the expected value of the sample
criterion difference: the pseudo-true population difference (each
candidate fit to the generating model's implied moments) plus the
finite-sample trace correction from ``expected_ic_diff``.
"""

from __future__ import annotations

import functools
import itertools
import math
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dsl import param_count, parse_model
from .resampling import SimConfig, bootstrap_ic_ci, simulate_data
from .sem import (
    FitError,
    _fit_to_moments,
    casewise_scores,
    fit_ml,
    implied_moments,
    information_criteria,
    unit_information,
)
from .vuong import (
    DegenerateComparisonError,
    distinguishability_test,
    ic_difference_ci,
    nested_tests,
    nonnested_lrt,
)

__all__ = [
    "SIM1_MODEL_A", "SIM1_MODEL_B",
    "SIM2_MODEL_A", "SIM2_MODEL_B", "SIM2_MODEL_C", "SIM2_MODEL_D",
    "SIM3_FULL", "SIM3_RESTRICTED",
    "SimSummary", "endpoint_sd", "effective_params",
    "population_ic_diff", "expected_ic_diff",
    "sim1_config", "sim2_config", "sim3_config",
    "run_sim1", "run_sim2", "run_sim3",
    "write_interval_tsv", "write_power_tsv", "write_manifest_json",
]

# -- model catalog -----------------------------------------------------

SIM1_MODEL_A = """\
F1 =~ NA*X1 + X2 + X3 + X4
F2 =~ NA*X4 + X5 + X6
F1 ~~ 1*F1
F2 ~~ 1*F2
F1 ~~ F2
"""

SIM1_MODEL_B = """\
F1 =~ NA*X1 + X2 + X3
F2 =~ NA*X3 + X4 + X5 + X6
F1 ~~ 1*F1
F2 ~~ 1*F2
F1 ~~ F2
"""

SIM2_MODEL_A = """\
X3 ~ X1 + X2
X4 ~ X3
X5 ~ X3
X6 ~ X3
X7 ~ X3
X8 ~ X3
X9 ~ X3
X1 ~~ X2
"""

SIM3_RESTRICTED = """\
X2 ~ X1
X3 ~ X2
X4 ~ X2 + X3
X5 ~ X3
X6 ~ X2 + X3
X7 ~ X3 + X4
X8 ~ X5
X9 ~ X3 + X6
"""

SIM3_FULL = SIM3_RESTRICTED + """\
X7 ~~ X8
X7 ~~ X9
X8 ~~ X9
"""

SIM2_MODEL_B = SIM3_FULL

SIM2_MODEL_C = """\
X6 ~ X3
X7 ~ X4
X8 ~ X5
X9 ~ X6 + X7 + X8
X1 ~~ X2
X1 ~~ X3
X1 ~~ X4
X1 ~~ X5
X2 ~~ X3
X2 ~~ X4
X2 ~~ X5
X3 ~~ X4
X3 ~~ X5
X4 ~~ X5
"""

SIM2_MODEL_D = """\
X2 ~ X1
X3 ~ X1
X4 ~ X1
X5 ~ X2
X6 ~ X2
X7 ~ X2 + X3
X8 ~ X3 + X4
X9 ~ X4
"""

_SIM2_TEXTS = {"A": SIM2_MODEL_A, "B": SIM2_MODEL_B, "C": SIM2_MODEL_C}
_SIM2_PAIRS = ("A-B", "B-C", "C-A")


@functools.lru_cache(maxsize=None)
def _spec(text: str):
    return parse_model(text)


# -- generating parameter values ---------------------------------------

_SIM1_LOADINGS = {"F1=~X1": 0.9, "F1=~X2": 0.8, "F1=~X3": 0.7,
                  "F2=~X4": 0.9, "F2=~X5": 0.8, "F2=~X6": 0.7}
_SIM1_FACTOR_CORR = 0.3


def sim1_config(d: float, n: int, seed=0) -> SimConfig:
    """Two-factor generating model with the extra X4 loading set to d.

    Primary loadings are 0.9/0.8/0.7 per factor, factors are
    standardized with correlation 0.3, and residual variances complete
    unit manifest variances at d=0.
    """
    spec = _spec(SIM1_MODEL_A)
    values = {"F1~~F2": _SIM1_FACTOR_CORR, "F1=~X4": d}
    values.update(_SIM1_LOADINGS)
    for name, lam in _SIM1_LOADINGS.items():
        var = name.split("=~")[1]
        values[f"{var}~~{var}"] = 1.0 - lam * lam
    theta = np.array([values[nm] for nm in spec.param_names])
    return SimConfig(spec=spec, theta_true=theta, n=n, seed=seed)


def _path_theta(spec, extra=None) -> np.ndarray:
    # paths 0.2, residual variances 0.8, exogenous X1 variance 1.0
    values = {}
    for name in spec.param_names:
        if "~~" in name:
            values[name] = 1.0 if name == "X1~~X1" else 0.8
        else:
            values[name] = 0.2
    if extra:
        values.update(extra)
    return np.array([values[nm] for nm in spec.param_names])


def sim2_config(n: int, seed=0) -> SimConfig:
    """Nine-variable generating path model for the interval study."""
    spec = _spec(SIM2_MODEL_D)
    return SimConfig(spec=spec, theta_true=_path_theta(spec), n=n, seed=seed)


def sim3_config(d: float, n: int, seed=0) -> SimConfig:
    """Nested-study generating model: three residual covariances at d."""
    spec = _spec(SIM3_FULL)
    extra = {"X7~~X8": d, "X7~~X9": d, "X8~~X9": d}
    return SimConfig(spec=spec, theta_true=_path_theta(spec, extra), n=n,
                     seed=seed)


# -- population targets ------------------------------------------------


def population_ic_diff(gen_spec, gen_theta, spec_a, spec_b, n,
                       criterion: str = "bic") -> float:
    """Population IC(A) - IC(B) under the generating model.

    Fits each candidate to the generating implied moments (pseudo-true
    parameters), scales the expected log-likelihood by n, and adds the
    penalty gap.  ``expected_ic_diff`` layers the finite-sample bias on
    top of this to form the coverage target for the interval studies.
    """
    if criterion not in ("aic", "bic"):
        raise ValueError(f"criterion must be 'aic' or 'bic', got {criterion!r}")
    mom = implied_moments(gen_spec, np.asarray(gen_theta, dtype=float))
    ics = []
    for spec in (spec_a, spec_b):
        _, ll, converged = _fit_to_moments(spec, mom.mu, mom.sigma, n,
                                           restarts=3)
        if not converged:
            raise FitError("pseudo-true moment fit did not converge")
        k = param_count(spec)
        pen = 2.0 * k if criterion == "aic" else k * math.log(n)
        ics.append(-2.0 * ll + pen)
    return float(ics[0] - ics[1])


_TRACE_N = 200_000
_TRACE_SEED = 74321


def effective_params(gen_spec, gen_theta, spec, *, n_big: int = _TRACE_N,
                     seed: int = _TRACE_SEED) -> float:
    """Effective parameter count tr(U^-1 V) of a candidate under truth.

    Estimated by fitting the candidate to one large seeded sample from
    the generating model; equals the parameter count when the candidate
    is correctly specified.
    """
    cfg = SimConfig(spec=gen_spec, theta_true=np.asarray(gen_theta, float),
                    n=n_big, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = simulate_data(cfg)
        fit = fit_ml(spec, data)
        scores = casewise_scores(fit, data)
        v_hat = scores.T @ scores / scores.shape[0]
        u_hat = unit_information(fit)
    return float(np.trace(np.linalg.solve(u_hat, v_hat)))


def expected_ic_diff(gen_spec, gen_theta, spec_a, spec_b, n,
                     criterion: str = "bic", *, n_big: int = _TRACE_N,
                     seed: int = _TRACE_SEED) -> float:
    """Expected IC(A) - IC(B) at sample size n under the generating model.

    The pseudo-true population difference plus the finite-sample fit
    bias of the two maximized log-likelihoods (effective-parameter
    traces).  This is the coverage target for the interval studies: at
    realistic n the O(1) bias is visible next to the O(sqrt n) interval
    width, and sample criterion differences center on this quantity
    rather than on the pseudo-true value.
    """
    base = population_ic_diff(gen_spec, gen_theta, spec_a, spec_b, n,
                              criterion)
    tr_a = effective_params(gen_spec, gen_theta, spec_a, n_big=n_big,
                            seed=seed)
    tr_b = effective_params(gen_spec, gen_theta, spec_b, n_big=n_big,
                            seed=seed)
    return base + (tr_b - tr_a)


def endpoint_sd(lowers, uppers) -> float:
    """Pooled standard deviation of interval endpoints across replicates."""
    lo = np.asarray(lowers, dtype=float)
    up = np.asarray(uppers, dtype=float)
    if lo.ndim != 1 or lo.shape != up.shape:
        raise ValueError("lower and upper endpoint vectors must have equal length")
    m = lo.size
    if m < 2:
        raise ValueError("endpoint variability needs at least 2 replicates")
    s2l = float(lo.var(ddof=1))
    s2u = float(up.var(ddof=1))
    return math.sqrt((m - 1) * (s2l + s2u) / (2 * m - 2))


# -- summaries ---------------------------------------------------------


@dataclass(frozen=True)
class SimSummary:
    """Aggregated results for one simulation condition.

    Rates are computed over the kept (converged) replicates; ``reps`` is
    the number attempted and ``dropped`` the number discarded.
    """

    condition: dict
    reps: int
    dropped: int
    reject_rates: dict
    coverage: dict
    miss_low: dict
    miss_high: dict
    mean_width: dict
    endpoint_sd: dict
    truth: float | None = None

    def __post_init__(self):
        for label, table in (("reject_rates", self.reject_rates),
                             ("coverage", self.coverage),
                             ("miss_low", self.miss_low),
                             ("miss_high", self.miss_high)):
            for key, val in table.items():
                if not 0.0 <= val <= 1.0:
                    raise ValueError(
                        f"{label}[{key!r}] = {val} is not a proportion")
        for key, val in self.endpoint_sd.items():
            if val < 0.0:
                raise ValueError(f"endpoint_sd[{key!r}] = {val} is negative")
        for key, cov in self.coverage.items():
            total = cov + self.miss_low.get(key, 0.0) + self.miss_high.get(key, 0.0)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(
                    f"coverage and miss proportions for {key!r} sum to {total}")


def _interval_stats(lowers, uppers, truth):
    lo = np.asarray(lowers, dtype=float)
    up = np.asarray(uppers, dtype=float)
    covered = float(np.mean((lo <= truth) & (truth <= up)))
    miss_low = float(np.mean(truth < lo))
    miss_high = float(np.mean(truth > up))
    return covered, miss_low, miss_high, float(np.mean(up - lo)), endpoint_sd(lo, up)


# -- replicate scheduling ----------------------------------------------


def _dkey(d: float) -> int:
    return round(d * 1000)


def _child_seed(key) -> int:
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _map_reps(worker, job, reps: int, threads: int):
    if threads <= 1:
        return [worker(job, rep) for rep in range(reps)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        chunk = max(1, reps // (threads * 4))
        return list(pool.map(worker, itertools.repeat(job), range(reps),
                             chunksize=chunk))


def _check_run_args(reps: int, seed: int, threads: int):
    if reps < 2:
        raise ValueError(f"reps must be at least 2, got {reps}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if threads < 1:
        raise ValueError(f"threads must be at least 1, got {threads}")


def _keep(records, label):
    kept = [r for r in records if r is not None]
    if not kept:
        raise FitError(f"all replicates failed in condition {label}")
    return kept, len(records) - len(kept)


# -- study 1: overlapping two-factor models ----------------------------


@dataclass(frozen=True)
class _Sim1Job:
    n: int
    d: float
    seed: int
    alpha: float
    ci_level: float
    boot_reps: int


def _sim1_rep(job: _Sim1Job, rep: int):
    key = [job.seed, 1, job.n, _dkey(job.d), rep]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec_a = _spec(SIM1_MODEL_A)
        spec_b = _spec(SIM1_MODEL_B)
        data = simulate_data(sim1_config(job.d, job.n, seed=key))
        try:
            fit_a = fit_ml(spec_a, data)
            fit_b = fit_ml(spec_b, data)
            if not (fit_a.converged and fit_b.converged):
                return None
            _, _, p_dist = distinguishability_test(fit_a, fit_b, data)
            try:
                z, _, _ = nonnested_lrt(fit_a, fit_b, data)
            except DegenerateComparisonError:
                z = 0.0
            bic_diff = (information_criteria(fit_a)[1]
                        - information_criteria(fit_b)[1])
            v_lo, v_hi = ic_difference_ci(fit_a, fit_b, data,
                                          alpha=1.0 - job.ci_level)
            if job.boot_reps:
                b_lo, b_hi = bootstrap_ic_ci(
                    spec_a, spec_b, data, reps=job.boot_reps,
                    alpha=1.0 - job.ci_level, seed=_child_seed(key + [1]))
            else:
                b_lo = b_hi = math.nan
        except FitError:
            return None
    return (p_dist, z, bic_diff, v_lo, v_hi, b_lo, b_hi)


def run_sim1(n_levels=(200, 500, 1000), d_levels=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
             reps: int = 1000, seed: int = 1, *, alpha: float = 0.05,
             ci_level: float = 0.90, boot_reps: int = 0,
             threads: int = 1) -> list[SimSummary]:
    """Power and interval summaries for the overlapping-CFA pair.

    Counting rules per replicate: the distinguishability test rejects at
    ``alpha``; the LRT favors the cross-loading model when z exceeds the
    one-tailed critical value; the conditional LRT rate restricts to
    replicates where distinguishability was rejected; BIC favors the
    model with the lower value.  ``boot_reps=0`` skips bootstrap
    intervals (the analytic columns are unaffected).
    """
    _check_run_args(reps, seed, threads)
    spec_a = _spec(SIM1_MODEL_A)
    spec_b = _spec(SIM1_MODEL_B)
    z_crit = float(stats.norm.ppf(1.0 - alpha))
    trace_gap = {}  # d -> tr_B - tr_A; the generating model ignores n
    out = []
    for n, d in itertools.product(n_levels, d_levels):
        gen = sim1_config(d, n)
        if d not in trace_gap:
            trace_gap[d] = (
                effective_params(gen.spec, gen.theta_true, spec_b)
                - effective_params(gen.spec, gen.theta_true, spec_a))
        truth = population_ic_diff(gen.spec, gen.theta_true, spec_a,
                                   spec_b, n) + trace_gap[d]
        job = _Sim1Job(n=n, d=d, seed=seed, alpha=alpha, ci_level=ci_level,
                       boot_reps=boot_reps)
        kept, dropped = _keep(_map_reps(_sim1_rep, job, reps, threads),
                              f"(n={n}, d={d})")
        arr = np.asarray(kept, dtype=float)
        p_dist, z, bic_diff = arr[:, 0], arr[:, 1], arr[:, 2]
        rejected = p_dist < alpha
        favors_a = z > z_crit
        rates = {
            "distinguishability": float(np.mean(rejected)),
            "lrt": float(np.mean(favors_a)),
            "lrt_conditional": (float(np.mean(favors_a[rejected]))
                                if rejected.any() else 0.0),
            "bic": float(np.mean(bic_diff < 0.0)),
        }
        coverage, miss_low, miss_high, width, sd = {}, {}, {}, {}, {}
        stats_v = _interval_stats(arr[:, 3], arr[:, 4], truth)
        coverage["vuong"], miss_low["vuong"], miss_high["vuong"], \
            width["vuong"], sd["vuong"] = stats_v
        if boot_reps:
            stats_b = _interval_stats(arr[:, 5], arr[:, 6], truth)
            coverage["boot"], miss_low["boot"], miss_high["boot"], \
                width["boot"], sd["boot"] = stats_b
        out.append(SimSummary(condition={"n": n, "d": d}, reps=reps,
                              dropped=dropped, reject_rates=rates,
                              coverage=coverage, miss_low=miss_low,
                              miss_high=miss_high, mean_width=width,
                              endpoint_sd=sd, truth=truth))
    return out


# -- study 2: BIC-difference intervals for path models -----------------


@dataclass(frozen=True)
class _Sim2Job:
    n: int
    seed: int
    ci_level: float
    boot_reps: int
    pairs: tuple


def _sim2_rep(job: _Sim2Job, rep: int):
    key = [job.seed, 2, job.n, 0, rep]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = simulate_data(sim2_config(job.n, seed=key))
        needed = sorted({name for pair in job.pairs for name in pair.split("-")})
        try:
            fits = {name: fit_ml(_spec(_SIM2_TEXTS[name]), data)
                    for name in needed}
            if not all(f.converged for f in fits.values()):
                return None
            results = []
            for pair_idx, pair in enumerate(job.pairs):
                left, right = pair.split("-")
                v_lo, v_hi = ic_difference_ci(fits[left], fits[right], data,
                                              alpha=1.0 - job.ci_level)
                if job.boot_reps:
                    b_lo, b_hi = bootstrap_ic_ci(
                        _spec(_SIM2_TEXTS[left]), _spec(_SIM2_TEXTS[right]),
                        data, reps=job.boot_reps, alpha=1.0 - job.ci_level,
                        seed=_child_seed(key + [pair_idx + 1]))
                else:
                    b_lo = b_hi = math.nan
                results.append((v_lo, v_hi, b_lo, b_hi))
        except FitError:
            return None
    return tuple(results)


def run_sim2(n_levels=(200, 500, 1000), reps: int = 1000, seed: int = 1, *,
             pairs: tuple = _SIM2_PAIRS, boot_reps: int = 1000,
             ci_level: float = 0.90, threads: int = 1) -> list[SimSummary]:
    """Coverage, width, and endpoint variability of BIC-difference CIs.

    Data come from the nine-variable generating model; each requested
    pair of candidate models is fit to the same replicate datasets.
    ``boot_reps=0`` is the fast path without bootstrap intervals.
    """
    _check_run_args(reps, seed, threads)
    for pair in pairs:
        if pair not in _SIM2_PAIRS:
            raise ValueError(
                f"unknown model pair {pair!r}; choose from {_SIM2_PAIRS}")
    records_by_n = {}
    for n in n_levels:
        job = _Sim2Job(n=n, seed=seed, ci_level=ci_level,
                       boot_reps=boot_reps, pairs=tuple(pairs))
        kept, dropped = _keep(_map_reps(_sim2_rep, job, reps, threads),
                              f"(n={n})")
        records_by_n[n] = (kept, dropped)
    gen0 = sim2_config(n_levels[0] if n_levels else 200)
    traces = {name: effective_params(gen0.spec, gen0.theta_true,
                                     _spec(_SIM2_TEXTS[name]))
              for name in sorted({m for pair in pairs for m in pair.split("-")})}
    out = []
    for pair_idx, pair in enumerate(pairs):
        left, right = pair.split("-")
        spec_l = _spec(_SIM2_TEXTS[left])
        spec_r = _spec(_SIM2_TEXTS[right])
        for n in n_levels:
            gen = sim2_config(n)
            truth = population_ic_diff(gen.spec, gen.theta_true,
                                       spec_l, spec_r, n) \
                + (traces[right] - traces[left])
            kept, dropped = records_by_n[n]
            arr = np.asarray([r[pair_idx] for r in kept], dtype=float)
            coverage, miss_low, miss_high, width, sd = {}, {}, {}, {}, {}
            stats_v = _interval_stats(arr[:, 0], arr[:, 1], truth)
            coverage["vuong"], miss_low["vuong"], miss_high["vuong"], \
                width["vuong"], sd["vuong"] = stats_v
            if boot_reps:
                stats_b = _interval_stats(arr[:, 2], arr[:, 3], truth)
                coverage["boot"], miss_low["boot"], miss_high["boot"], \
                    width["boot"], sd["boot"] = stats_b
            out.append(SimSummary(condition={"pair": pair, "n": n},
                                  reps=reps, dropped=dropped,
                                  reject_rates={}, coverage=coverage,
                                  miss_low=miss_low, miss_high=miss_high,
                                  mean_width=width, endpoint_sd=sd,
                                  truth=truth))
    return out


# -- study 3: nested pair ----------------------------------------------


@dataclass(frozen=True)
class _Sim3Job:
    n: int
    d: float
    seed: int
    alpha: float


def _sim3_rep(job: _Sim3Job, rep: int):
    key = [job.seed, 3, job.n, _dkey(job.d), rep]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = simulate_data(sim3_config(job.d, job.n, seed=key))
        try:
            fit_full = fit_ml(_spec(SIM3_FULL), data)
            fit_restricted = fit_ml(_spec(SIM3_RESTRICTED), data)
            if not (fit_full.converged and fit_restricted.converged):
                return None
            p_var, p_lr, p_classical = nested_tests(fit_full, fit_restricted,
                                                    data)
            bic_diff = (information_criteria(fit_full)[1]
                        - information_criteria(fit_restricted)[1])
        except FitError:
            return None
    return (p_var, p_lr, p_classical, bic_diff)


def run_sim3(n_levels=(200, 500, 1000),
             d_levels=(0.0, 0.025, 0.05, 0.075, 0.1, 0.125),
             reps: int = 1000, seed: int = 1, *, alpha: float = 0.05,
             threads: int = 1) -> list[SimSummary]:
    """Rejection rates for the nested pair across covariance magnitudes.

    Statistics counted as favoring the full model: the variance
    (distinguishability) test and the model-selection LRT at ``alpha``,
    the classical chi-square difference test at ``alpha``, and a lower
    BIC.
    """
    _check_run_args(reps, seed, threads)
    spec_full = _spec(SIM3_FULL)
    spec_restricted = _spec(SIM3_RESTRICTED)
    trace_gap = {}
    out = []
    for n, d in itertools.product(n_levels, d_levels):
        gen = sim3_config(d, n)
        if d not in trace_gap:
            trace_gap[d] = (
                effective_params(gen.spec, gen.theta_true, spec_restricted)
                - effective_params(gen.spec, gen.theta_true, spec_full))
        truth = population_ic_diff(gen.spec, gen.theta_true, spec_full,
                                   spec_restricted, n) + trace_gap[d]
        job = _Sim3Job(n=n, d=d, seed=seed, alpha=alpha)
        kept, dropped = _keep(_map_reps(_sim3_rep, job, reps, threads),
                              f"(n={n}, d={d})")
        arr = np.asarray(kept, dtype=float)
        rates = {
            "distinguishability": float(np.mean(arr[:, 0] < alpha)),
            "vuong_lrt": float(np.mean(arr[:, 1] < alpha)),
            "chidiff": float(np.mean(arr[:, 2] < alpha)),
            "bic": float(np.mean(arr[:, 3] < 0.0)),
        }
        out.append(SimSummary(condition={"n": n, "d": d}, reps=reps,
                              dropped=dropped, reject_rates=rates,
                              coverage={}, miss_low={}, miss_high={},
                              mean_width={}, endpoint_sd={}, truth=truth))
    return out


# -- delimited output --------------------------------------------------


def _fmt(table: dict, key: str) -> str:
    return f"{table[key]:.3f}" if key in table else "NA"


def write_interval_tsv(summaries, path) -> None:
    """Interval summary table: one row per condition, width/SD/coverage
    columns for the analytic and bootstrap intervals."""
    if not summaries:
        raise ValueError("no summaries to write")
    keys = list(summaries[0].condition)
    header = keys + ["vuong_width", "boot_width", "vuong_endpoint_sd",
                     "boot_endpoint_sd", "vuong_coverage", "boot_coverage"]
    lines = ["\t".join(header)]
    for s in summaries:
        row = [str(s.condition[k]) for k in keys]
        row += [_fmt(s.mean_width, "vuong"), _fmt(s.mean_width, "boot"),
                _fmt(s.endpoint_sd, "vuong"), _fmt(s.endpoint_sd, "boot"),
                _fmt(s.coverage, "vuong"), _fmt(s.coverage, "boot")]
        lines.append("\t".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_power_tsv(summaries, path) -> None:
    """Long-format rejection rates, one row per condition and statistic."""
    if not summaries:
        raise ValueError("no summaries to write")
    keys = list(summaries[0].condition)
    lines = ["\t".join(keys + ["statistic", "rate", "reps"])]
    for s in summaries:
        cond = [str(s.condition[k]) for k in keys]
        for stat_name, rate in s.reject_rates.items():
            lines.append("\t".join(cond + [stat_name, f"{rate:.6g}",
                                           str(s.reps)]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest_json(path, payload: dict) -> None:
    """Write a run-metadata manifest as indented JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
