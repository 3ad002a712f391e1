"""SEM engine: implied moments, casewise MVN likelihood, ML fitting,
casewise scores, and information matrices.

Parameters map to moments through the all-variables formulation: manifests
and latents are stacked into one vector v satisfying v = A v + e with
e ~ N(nu, Psi), so Sigma_all = (I-A)^{-1} Psi (I-A)^{-T} and the manifest
block is read off the top-left corner.  Loadings occupy the manifest-by-
latent block of A.

Fitting minimizes f(theta) = (1/2)[p ln 2pi + ln|Sigma| + tr(M Sigma^{-1})],
the negative mean log-likelihood expressed through the sufficient statistics
(mean, biased covariance); M absorbs the mean residual when the model has a
mean structure.  Models without a mean structure profile the means out: the
likelihood is evaluated on mean-centered cases.
"""

from __future__ import annotations

import csv
import warnings
import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .dsl import ModelSpec

__all__ = [
    "DataError",
    "Dataset",
    "FitError",
    "FittedModel",
    "ImpliedMoments",
    "casewise_loglik",
    "casewise_scores",
    "fit_ml",
    "implied_moments",
    "information_criteria",
    "unit_information",
]

_LOG_2PI = np.log(2.0 * np.pi)
_VAR_FLOOR = 1e-6  # lower bound for free variance parameters
_BIG = 1e10  # objective value outside the feasible region
_SCORE_STEP = 1e-6  # central-difference step factor for moment Jacobians
_HESS_STEP = 1e-4  # central-difference step factor for the Hessian


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


class FitError(RuntimeError):
    """Raised when a model cannot be evaluated or fit on the given data."""


class Dataset:
    """Rectangular numeric data with named columns.

    Cases are stored as a read-only float matrix.  Missing or non-finite
    cells, duplicated names, constant columns, and n <= p are rejected up
    front: every downstream computation assumes a full-rank sample.
    """

    def __init__(self, cases, columns) -> None:
        arr = np.array(cases, dtype=float, copy=True)
        if arr.ndim != 2:
            raise DataError("cases must be a 2-D matrix")
        cols = tuple(str(c) for c in columns)
        if len(cols) != arr.shape[1]:
            raise DataError(
                f"{len(cols)} column names for {arr.shape[1]} data columns"
            )
        if len(set(cols)) != len(cols):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(arr)):
            raise DataError("data contain missing or non-finite values")
        if arr.shape[0] <= arr.shape[1]:
            raise DataError(
                f"need more cases than variables (n={arr.shape[0]}, p={arr.shape[1]})"
            )
        span = arr.max(axis=0) - arr.min(axis=0)
        if np.any(span == 0.0):
            bad = cols[int(np.argmax(span == 0.0))]
            raise DataError(f"column '{bad}' is constant")
        arr.setflags(write=False)
        self.cases = arr
        self.columns = cols

    @property
    def n(self) -> int:
        return self.cases.shape[0]

    @property
    def p(self) -> int:
        return self.cases.shape[1]

    @classmethod
    def from_csv(cls, path, delimiter: str = ",") -> "Dataset":
        """Read a headered numeric CSV; any missing or non-numeric cell
        is an error."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                    )
                try:
                    rows.append([float(cell) for cell in row])
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric or missing cell"
                    ) from None
        if not rows:
            raise DataError(f"{path}: no data rows")
        return cls(np.array(rows), header)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Dataset(n={self.n}, p={self.p}, columns={self.columns!r})"


@dataclass(frozen=True)
class ImpliedMoments:
    """Model-implied manifest mean vector and covariance matrix."""

    mu: np.ndarray
    sigma: np.ndarray


# -- compiled parameter layout -----------------------------------------


class _Compiled:
    """Index arrays that scatter a parameter vector into (A, Psi, nu)."""

    def __init__(self, spec: ModelSpec) -> None:
        p, m, t = spec.p, spec.m, spec.t
        self.p, self.m, self.t = p, m, t
        self.meanstructure = spec.meanstructure
        self.k = len(spec.param_names)

        base_a = np.zeros((t, t))
        base_psi = np.zeros((t, t))
        base_nu = np.zeros(t)

        def a_cell(matrix, row, col):
            if matrix == "lambda":
                return row, p + col
            return row, col

        for e in spec.fixed_table:
            if e.matrix in ("lambda", "beta"):
                r, c = a_cell(e.matrix, e.row, e.col)
                base_a[r, c] = e.value
            elif e.matrix == "psi":
                base_psi[e.row, e.col] = e.value
                base_psi[e.col, e.row] = e.value
            else:
                base_nu[e.row] = e.value

        a_par, a_r, a_c = [], [], []
        psi_par, psi_r, psi_c, psi_w = [], [], [], []
        nu_par, nu_r = [], []
        var_par, var_row = [], []
        for j, e in enumerate(spec.param_table):
            if e.matrix in ("lambda", "beta"):
                r, c = a_cell(e.matrix, e.row, e.col)
                a_par.append(j); a_r.append(r); a_c.append(c)
            elif e.matrix == "psi":
                psi_par.append(j); psi_r.append(e.row); psi_c.append(e.col)
                psi_w.append(0.5 if e.row == e.col else 1.0)
                if e.row == e.col:
                    var_par.append(j); var_row.append(e.row)
            else:
                nu_par.append(j); nu_r.append(e.row)

        self.base_a, self.base_psi, self.base_nu = base_a, base_psi, base_nu
        self.a_par = np.array(a_par, dtype=int)
        self.a_r = np.array(a_r, dtype=int)
        self.a_c = np.array(a_c, dtype=int)
        self.psi_par = np.array(psi_par, dtype=int)
        self.psi_r = np.array(psi_r, dtype=int)
        self.psi_c = np.array(psi_c, dtype=int)
        self.psi_w = np.array(psi_w)
        self.nu_par = np.array(nu_par, dtype=int)
        self.nu_r = np.array(nu_r, dtype=int)
        self.var_par = np.array(var_par, dtype=int)
        self.var_row = np.array(var_row, dtype=int)

        lower = np.array(spec.lower_bounds, dtype=float)
        lower[self.var_par] = np.maximum(lower[self.var_par], _VAR_FLOOR)
        self.lower = lower

    def matrices(self, theta):
        a = self.base_a.copy()
        a[self.a_r, self.a_c] = theta[self.a_par]
        psi = self.base_psi.copy()
        psi[self.psi_r, self.psi_c] = theta[self.psi_par]
        psi[self.psi_c, self.psi_r] = theta[self.psi_par]
        nu = self.base_nu.copy()
        if self.nu_par.size:
            nu[self.nu_r] = theta[self.nu_par]
        return a, psi, nu

    def moments_all(self, theta):
        """Return (E, Sigma_all, mu_all) with E = (I-A)^{-1}."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.k,):
            raise FitError(f"expected {self.k} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise FitError("non-finite parameter value")
        a, psi, nu = self.matrices(theta)
        eye = np.eye(self.t)
        try:
            e = np.linalg.inv(eye - a)
        except np.linalg.LinAlgError:
            raise FitError("singular (I - A): system has no reduced form") from None
        if not np.all(np.isfinite(e)):
            raise FitError("singular (I - A): system has no reduced form")
        sigma_all = e @ psi @ e.T
        mu_all = e @ nu if self.meanstructure else np.zeros(self.t)
        return e, sigma_all, mu_all


_compile_cache: "weakref.WeakKeyDictionary[ModelSpec, _Compiled]" = (
    weakref.WeakKeyDictionary()
)


def _compiled(spec: ModelSpec) -> _Compiled:
    comp = _compile_cache.get(spec)
    if comp is None:
        comp = _Compiled(spec)
        _compile_cache[spec] = comp
    return comp


# -- public moment/likelihood operations -------------------------------


def implied_moments(spec: ModelSpec, theta) -> ImpliedMoments:
    """Manifest-variable mean and covariance implied by theta.

    Models without a mean structure imply a zero mean vector.
    """
    comp = _compiled(spec)
    _, sigma_all, mu_all = comp.moments_all(theta)
    p = comp.p
    sigma = sigma_all[:p, :p]
    sigma = 0.5 * (sigma + sigma.T)
    return ImpliedMoments(mu=mu_all[:p].copy(), sigma=sigma)


def casewise_loglik(mom, data) -> np.ndarray:
    """MVN log-density of each case under (mom.mu, mom.sigma)."""
    cases = data.cases if isinstance(data, Dataset) else np.atleast_2d(
        np.asarray(data, dtype=float)
    )
    sigma = np.asarray(mom.sigma, dtype=float)
    p = sigma.shape[0]
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise FitError("implied covariance is not positive definite") from None
    resid = cases - np.asarray(mom.mu, dtype=float)
    z = sla.solve_triangular(chol, resid.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (p * _LOG_2PI + logdet + np.sum(z * z, axis=0))


# -- objective on sufficient statistics --------------------------------


def _objective(comp: _Compiled, xbar, s_mat, theta):
    """Negative mean log-likelihood and its exact gradient.

    Data enter only through (xbar, s_mat); a refit on resampled data costs
    one pass over the sufficient statistics per evaluation.
    """
    k = comp.k
    try:
        e, sigma_all, mu_all = comp.moments_all(theta)
    except FitError:
        return _BIG, np.zeros(k)
    p = comp.p
    sigma = sigma_all[:p, :p]
    try:
        chol = np.linalg.cholesky(0.5 * (sigma + sigma.T))
    except np.linalg.LinAlgError:
        return _BIG, np.zeros(k)
    inv_chol = sla.solve_triangular(chol, np.eye(p), lower=True)
    prec = inv_chol.T @ inv_chol
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))

    if comp.meanstructure:
        r = xbar - mu_all[:p]
        m_mat = s_mat + np.outer(r, r)
    else:
        r = None
        m_mat = s_mat
    f = 0.5 * (p * _LOG_2PI + logdet + np.sum(prec * m_mat))
    if not np.isfinite(f):
        return _BIG, np.zeros(k)

    # d f = (1/2) tr(G dSigma) - r' P dmu  with  G = P - P M P.
    g_mat = prec - prec @ m_mat @ prec
    ep = e[:p, :]
    gep = g_mat @ ep
    grad = np.zeros(k)
    if comp.a_par.size:
        t1 = sigma_all[:, :p] @ gep
        grad[comp.a_par] = t1[comp.a_c, comp.a_r]
    if comp.psi_par.size:
        t2 = ep.T @ gep
        grad[comp.psi_par] = comp.psi_w * t2[comp.psi_r, comp.psi_c]
    if comp.meanstructure:
        v_ep = ep.T @ (prec @ r)
        if comp.a_par.size:
            grad[comp.a_par] -= mu_all[comp.a_c] * v_ep[comp.a_r]
        if comp.nu_par.size:
            grad[comp.nu_par] = -v_ep[comp.nu_r]
    return f, grad


def _suff_stats(cases):
    xbar = cases.mean(axis=0)
    centered = cases - xbar
    s_mat = centered.T @ centered / cases.shape[0]
    return xbar, centered, s_mat


def _aligned_cases(spec: ModelSpec, data: Dataset) -> np.ndarray:
    want = spec.manifest_names
    have = data.columns
    if set(want) != set(have):
        missing = sorted(set(want) - set(have))
        extra = sorted(set(have) - set(want))
        parts = []
        if missing:
            parts.append(f"missing columns {missing}")
        if extra:
            parts.append(f"unexpected columns {extra}")
        raise DataError("data do not match model variables: " + "; ".join(parts))
    order = [have.index(name) for name in want]
    return data.cases[:, order]


# -- optimizer ---------------------------------------------------------


def _build_start(comp: _Compiled, spec: ModelSpec, xbar, s_mat):
    start = np.array(spec.start_values, dtype=float)
    # Manifest residual variances start at half the sample variance;
    # intercepts at the sample mean.  Latent scales keep the default 1.0.
    for j, row in zip(comp.var_par, comp.var_row):
        if row < comp.p:
            start[j] = max(0.5 * s_mat[row, row], 0.05)
    if comp.meanstructure:
        for j, row in zip(comp.nu_par, comp.nu_r):
            if row < comp.p:
                start[j] = xbar[row]
    return np.maximum(start, comp.lower + 1e-8)


def _minimize(comp, xbar, s_mat, start, max_iter, gtol, trace=None):
    fun = lambda th: _objective(comp, xbar, s_mat, th)
    callback = None
    if trace is not None:
        callback = lambda xk: trace.append(_objective(comp, xbar, s_mat, xk)[0])
    bounds = [(lo if np.isfinite(lo) else None, None) for lo in comp.lower]
    res = optimize.minimize(
        fun,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={
            "maxiter": max_iter,
            "maxfun": 10 * max_iter,
            "ftol": 1e-14,
            "gtol": 0.1 * gtol,
            "maxcor": 12,
        },
    )
    return res


def _projected_grad_norm(theta, grad, lower):
    at_bound = (theta <= lower + 1e-10) & (grad > 0)
    pg = np.where(at_bound, 0.0, grad)
    return float(np.abs(pg).max()) if pg.size else 0.0


def _solve_ml(comp, spec, xbar, s_mat, n, start, max_iter, gtol, restarts, trace=None):
    """Run the bounded quasi-Newton solver with deterministic restarts."""
    if start is None:
        start = _build_start(comp, spec, xbar, s_mat)
    else:
        start = np.maximum(np.asarray(start, dtype=float), comp.lower + 1e-8)
    best = None
    rng = np.random.default_rng(0)
    attempt_start = start
    total_iter = 0
    for attempt in range(restarts + 1):
        if trace is not None:
            trace.clear()
        res = _minimize(comp, xbar, s_mat, attempt_start, max_iter, gtol, trace)
        total_iter += res.nit
        pg = _projected_grad_norm(res.x, res.jac, comp.lower)
        ok = pg <= gtol and np.isfinite(res.fun)
        if best is None or res.fun < best[0].fun:
            best = (res, pg)
        if ok:
            best = (res, pg)
            break
        jitter = rng.normal(scale=0.1, size=start.size)
        attempt_start = np.maximum(
            start * (1.0 + jitter) + 0.05 * jitter, comp.lower + 1e-6
        )
    res, pg = best
    converged = pg <= gtol and np.isfinite(res.fun)
    return res.x, float(res.fun), converged, total_iter


# -- fitted model ------------------------------------------------------


class FittedModel:
    """ML fit of a ModelSpec to a Dataset.

    Scores and information matrices are computed on first access and
    cached; resampling loops that only need the likelihood never pay for
    them.
    """

    def __init__(self, spec, data, cases, theta_hat, converged, iterations,
                 objective_trace):
        self.spec = spec
        self._data = data
        self._cases = cases
        self.theta_hat = np.asarray(theta_hat, dtype=float)
        self.converged = bool(converged)
        self.iterations = int(iterations)
        self.objective_trace = list(objective_trace)

        self._xbar, centered, self._s_mat = _suff_stats(cases)
        self._work = cases if spec.meanstructure else centered
        self._xbar_eff = self._xbar if spec.meanstructure else np.zeros(spec.p)
        self.implied = implied_moments(spec, self.theta_hat)
        self.loglik_casewise = casewise_loglik(self.implied, self._work)
        self.loglik_total = float(self.loglik_casewise.sum())

    @property
    def n(self) -> int:
        return self._cases.shape[0]

    @property
    def k(self) -> int:
        return self.theta_hat.size

    @property
    def param_names(self):
        return self.spec.param_names

    @cached_property
    def _moment_jacobians(self):
        """Central-difference Jacobians of (mu, sigma) in theta."""
        spec, theta = self.spec, self.theta_hat
        p, k = spec.p, self.k
        dmu = np.zeros((k, p))
        dsigma = np.zeros((k, p, p))
        for j in range(k):
            h = _SCORE_STEP * (1.0 + abs(theta[j]))
            up = theta.copy(); up[j] += h
            dn = theta.copy(); dn[j] -= h
            mom_up = implied_moments(spec, up)
            mom_dn = implied_moments(spec, dn)
            dmu[j] = (mom_up.mu - mom_dn.mu) / (2.0 * h)
            dsigma[j] = (mom_up.sigma - mom_dn.sigma) / (2.0 * h)
        return dmu, dsigma

    @cached_property
    def _precision(self):
        chol = np.linalg.cholesky(self.implied.sigma)
        inv_chol = sla.solve_triangular(chol, np.eye(self.spec.p), lower=True)
        return inv_chol.T @ inv_chol

    @cached_property
    def scores(self) -> np.ndarray:
        return self._scores_for(self._work)

    def _scores_for(self, work) -> np.ndarray:
        """Casewise score matrix: analytic MVN derivatives in the moments,
        chained with the finite-difference moment Jacobians."""
        dmu, dsigma = self._moment_jacobians
        prec = self._precision
        resid = work - self.implied.mu
        q = resid @ prec
        out = np.empty((work.shape[0], self.k))
        for j in range(self.k):
            quad = np.einsum("ip,ip->i", q @ dsigma[j], q)
            out[:, j] = q @ dmu[j] + 0.5 * (quad - np.sum(prec * dsigma[j]))
        return out

    @cached_property
    def unit_hessian(self) -> np.ndarray:
        """Average casewise Hessian of the log-likelihood (estimate of U),
        by central differences of the analytic mean-score function."""
        comp = _compiled(self.spec)
        theta = self.theta_hat
        hess = np.empty((self.k, self.k))
        for j in range(self.k):
            h = _HESS_STEP * (1.0 + abs(theta[j]))
            up = theta.copy(); up[j] += h
            dn = theta.copy(); dn[j] -= h
            _, g_up = _objective(comp, self._xbar_eff, self._s_mat, up)
            _, g_dn = _objective(comp, self._xbar_eff, self._s_mat, dn)
            hess[j] = (g_up - g_dn) / (2.0 * h)
        # _objective is the negative mean log-likelihood, so U = -Hessian.
        u_mat = -0.5 * (hess + hess.T)
        return u_mat

    @cached_property
    def expected_info(self) -> np.ndarray:
        """Per-observation expected information at theta_hat."""
        dmu, dsigma = self._moment_jacobians
        prec = self._precision
        b = np.einsum("ab,jbc->jac", prec, dsigma)
        info = 0.5 * np.einsum("jab,lba->jl", b, b)
        info = info + dmu @ prec @ dmu.T
        return 0.5 * (info + info.T)

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"FittedModel(k={self.k}, n={self.n}, "
            f"loglik={self.loglik_total:.3f}, converged={self.converged})"
        )


# -- public fitting API ------------------------------------------------


def fit_ml(spec: ModelSpec, data: Dataset, *, start=None, max_iter: int = 500,
           gtol: float = 1e-6, restarts: int = 2) -> FittedModel:
    """Fit the model by maximum likelihood.

    Uses bounded quasi-Newton iterations on the sufficient-statistic form
    of the negative mean log-likelihood, with free variances bounded below
    at 1e-6 and deterministic jittered restarts on non-convergence.
    """
    comp = _compiled(spec)
    cases = _aligned_cases(spec, data)
    if data.n <= comp.k:
        raise FitError(
            f"need more cases than free parameters (n={data.n}, k={comp.k})"
        )
    xbar, centered, s_mat = _suff_stats(cases)
    xbar_eff = xbar if spec.meanstructure else np.zeros(comp.p)
    trace: list = []
    theta, _, converged, iters = _solve_ml(
        comp, spec, xbar_eff, s_mat, data.n, start, max_iter, gtol, restarts,
        trace=trace,
    )
    if not converged:
        warnings.warn(
            f"optimizer did not converge within {max_iter} iterations "
            f"({restarts} restart(s)); treat estimates as diagnostic",
            UserWarning,
            stacklevel=2,
        )
    at_floor = comp.var_par[theta[comp.var_par] <= _VAR_FLOOR + 1e-9]
    if at_floor.size:
        names = [spec.param_names[j] for j in at_floor]
        warnings.warn(
            f"variance estimate at lower boundary (Heywood case): {names}",
            UserWarning,
            stacklevel=2,
        )
    return FittedModel(spec, data, cases, theta, converged, iters, trace)


def casewise_scores(fit: FittedModel, data) -> np.ndarray:
    """n x k matrix of casewise score contributions at fit.theta_hat."""
    if data is fit._data:
        return fit.scores
    cases = _aligned_cases(fit.spec, data)
    work = cases if fit.spec.meanstructure else cases - cases.mean(axis=0)
    return fit._scores_for(work)


def unit_information(fit: FittedModel) -> np.ndarray:
    """Observed per-observation information: the negative average casewise
    Hessian at theta_hat."""
    info = -fit.unit_hessian
    cond = np.linalg.cond(info)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn(
            f"information matrix is numerically singular (cond={cond:.2e})",
            UserWarning,
            stacklevel=2,
        )
    return info


def information_criteria(fit) -> tuple[float, float]:
    """(AIC, BIC) from total log-likelihood, parameter count, and n."""
    ll = fit.loglik_total
    k = fit.k
    n = fit.n
    aic = -2.0 * ll + 2.0 * k
    bic = -2.0 * ll + k * np.log(n)
    return float(aic), float(bic)


# -- internal: fit directly to sufficient statistics -------------------


def _fit_to_moments(spec: ModelSpec, xbar, s_mat, n, *, start=None,
                    max_iter: int = 500, gtol: float = 1e-6,
                    restarts: int = 1):
    """Optimize against given (mean, covariance, n) without a Dataset.

    Returns (theta_hat, loglik_total, converged).  Used by resampling
    loops and population-level fits where casewise quantities are not
    needed.
    """
    comp = _compiled(spec)
    xbar_eff = np.asarray(xbar, dtype=float) if spec.meanstructure else np.zeros(comp.p)
    theta, f_val, converged, _ = _solve_ml(
        comp, spec, xbar_eff, np.asarray(s_mat, dtype=float), n, start,
        max_iter, gtol, restarts,
    )
    return theta, -float(n) * f_val, converged
