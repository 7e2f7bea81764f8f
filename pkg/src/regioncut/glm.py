"""Generalized linear models and per-unit deletion diagnostics.

Fits Poisson (log link, optional exposure offset) and Gaussian (identity
link) regressions by iteratively reweighted least squares, and computes
the influence quantities that drive region detection: leverages, Pearson
residuals, and the standardized one-step deletion change of the exposure
coefficient. The one-step form is exact for the Gaussian family; for the
Poisson family it is validated against full leave-one-out refits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .errors import (
    DegenerateLeverageError,
    SingularDesignError,
    ValidationError,
)

GAUSSIAN = "gaussian"
POISSON = "poisson"
FAMILIES = (GAUSSIAN, POISSON)

DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Unit-level regression inputs for one areal map.

    Parameters
    ----------
    unit_ids : list of str
        Unique identifiers; their order is the canonical unit order shared
        by adjacency matrices, similarity graphs, and partitions.
    y : ndarray, shape (S,)
        Response: counts for the Poisson family, reals for Gaussian.
    exposure : ndarray, shape (S,)
        The exposure whose association with ``y`` varies by region.
    covariates : ndarray, shape (S, q)
        Additional confounders. May have zero columns.
    offset : ndarray, shape (S,), optional
        Expected counts entering the Poisson mean multiplicatively.
        Not allowed for the Gaussian family.
    covariate_names : list of str, optional
        Defaults to ``x1 .. xq``.
    """

    unit_ids: list[str]
    y: np.ndarray
    exposure: np.ndarray
    covariates: np.ndarray
    offset: np.ndarray | None = None
    covariate_names: list[str] | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        exposure = np.asarray(self.exposure, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(len(y), -1)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "covariates", covariates)
        if self.offset is not None:
            object.__setattr__(self, "offset",
                               np.asarray(self.offset, dtype=float))

        s = len(self.unit_ids)
        if s < 2:
            raise ValidationError("dataset needs at least 2 units")
        if len(set(self.unit_ids)) != s:
            seen, dupes = set(), set()
            for uid in self.unit_ids:
                (dupes if uid in seen else seen).add(uid)
            raise ValidationError(f"duplicate unit_ids: {sorted(dupes)}")
        for name, vec in (("y", y), ("exposure", exposure)):
            if vec.shape != (s,):
                raise ValidationError(f"{name} has length {vec.shape}, "
                                      f"expected ({s},)")
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"{name} contains non-finite values")
        if covariates.shape[0] != s:
            raise ValidationError("covariates row count does not match "
                                  "unit count")
        if not np.all(np.isfinite(covariates)):
            raise ValidationError("covariates contain non-finite values")
        if self.offset is not None and self.offset.shape != (s,):
            raise ValidationError("offset length does not match unit count")
        if self.covariate_names is None:
            object.__setattr__(
                self, "covariate_names",
                [f"x{j + 1}" for j in range(covariates.shape[1])])
        elif len(self.covariate_names) != covariates.shape[1]:
            raise ValidationError("covariate_names length does not match "
                                  "covariate columns")

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def design_matrix(self) -> np.ndarray:
        """Design Z = [1, exposure, covariates], shape (S, q + 2)."""
        return np.column_stack(
            [np.ones(self.n_units), self.exposure, self.covariates])

    def design_columns(self) -> list[str]:
        return ["intercept", "exposure", *self.covariate_names]

    def subset(self, keep: np.ndarray) -> "Dataset":
        """Dataset restricted to the units selected by ``keep``."""
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        return Dataset(
            unit_ids=[self.unit_ids[i] for i in keep],
            y=self.y[keep],
            exposure=self.exposure[keep],
            covariates=self.covariates[keep],
            offset=None if self.offset is None else self.offset[keep],
            covariate_names=self.covariate_names,
        )


@dataclass
class GlmFit:
    """Converged (or flagged) IRLS fit plus the influence ingredients."""

    family: str
    beta_hat: np.ndarray        # over [intercept, exposure, covariates]
    cov_beta: np.ndarray        # dispersion * (Z' Omega Z)^{-1}
    se_exposure: float
    mu_hat: np.ndarray          # fitted response means (offset included)
    working_weights: np.ndarray  # diagonal of Omega at convergence
    leverages: np.ndarray       # diagonal of the weighted hat matrix
    pearson_residuals: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    columns: list[str]
    dispersion: float
    loglik_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    EXPOSURE_INDEX = 1

    @property
    def n_params(self) -> int:
        return len(self.beta_hat)


@dataclass(frozen=True)
class DeviationVector:
    """Standardized per-unit deletion deviations of the exposure effect."""

    d: np.ndarray
    sigma_d: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.d)):
            raise ValidationError("deviation vector has non-finite entries")
        if self.sigma_d < 0:
            raise ValidationError("sigma_d must be nonnegative")


def _validate_family(data: Dataset, family: str):
    if family not in FAMILIES:
        raise ValidationError(f"unknown family '{family}'; "
                              f"expected one of {FAMILIES}")
    if family == POISSON:
        y = data.y
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValidationError("poisson family requires integer-valued "
                                  "nonnegative responses")
        if data.offset is not None and np.any(data.offset <= 0):
            raise ValidationError("poisson offset must be positive "
                                  "elementwise")
    elif data.offset is not None:
        raise ValidationError("offset is only supported for the poisson "
                              "family")


def _offending_column(zw: np.ndarray, columns: list[str]) -> str:
    """Name the first design column made redundant by the ones before it."""
    _, r, piv = scipy.linalg.qr(zw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    ref = diag[0] if diag[0] > 0 else 1.0
    bad = np.flatnonzero(diag <= ref * 1e-10)
    if bad.size == 0:
        return columns[-1]
    return columns[min(piv[j] for j in bad)]


def _solve_normal(z: np.ndarray, w: np.ndarray, target: np.ndarray,
                  columns: list[str]):
    """Solve (Z'WZ) b = Z'W target, returning (b, cholesky factor)."""
    zw = z * w[:, None]
    ztwz = z.T @ zw
    try:
        chol = scipy.linalg.cho_factor(ztwz)
    except scipy.linalg.LinAlgError:
        raise SingularDesignError(
            _offending_column(z * np.sqrt(w)[:, None], columns)) from None
    rhs = zw.T @ target
    return scipy.linalg.cho_solve(chol, rhs), chol


def _leverages(z: np.ndarray, w: np.ndarray, chol) -> np.ndarray:
    """Diagonal of Omega^{1/2} Z (Z'Omega Z)^{-1} Z' Omega^{1/2}."""
    a = scipy.linalg.cho_solve(chol, z.T)
    return w * np.einsum("ij,ji->i", z, a)


def _gaussian_loglik(y: np.ndarray, mu: np.ndarray) -> float:
    # Profile log-likelihood at the variance MLE rss / n.
    n = len(y)
    rss = float(np.sum((y - mu) ** 2))
    sigma2 = max(rss / n, np.finfo(float).tiny)
    return -0.5 * n * (np.log(2.0 * np.pi * sigma2) + rss / (n * sigma2))


def _poisson_loglik(y: np.ndarray, eta: np.ndarray) -> float:
    with np.errstate(over="ignore"):
        mu = np.exp(eta)
    if not np.all(np.isfinite(mu)):
        return -np.inf
    return float(np.sum(y * eta - mu - gammaln(y + 1.0)))


def _fit_core(z, y, offset, family, columns, max_iter, tol):
    """IRLS on a raw design; shared by fit_glm and the LOO refits."""
    n, p = z.shape

    if family == GAUSSIAN:
        beta, chol = _solve_normal(z, np.ones(n), y, columns)
        mu = z @ beta
        ll = _gaussian_loglik(y, mu)
        return {
            "beta": beta, "chol": chol, "mu": mu, "eta": mu,
            "weights": np.ones(n), "loglik": ll, "converged": True,
            "n_iter": 1, "trace": np.array([ll]),
        }

    o = offset if offset is not None else 0.0
    log_o = np.log(o) if offset is not None else np.zeros(n)
    mu = y + 0.5
    eta = np.log(mu)
    beta = None
    ll = -np.inf
    trace = []
    converged = False
    n_iter = 0

    for it in range(1, max_iter + 1):
        n_iter = it
        w = mu
        z_work = (eta - log_o) + (y - mu) / mu
        beta_new, chol = _solve_normal(z, w, z_work, columns)

        if beta is not None:
            # Step-halve until the exact log-likelihood stops decreasing.
            step = 1.0
            direction = beta_new - beta
            while step > 2.0 ** -30:
                cand = beta + step * direction
                if _poisson_loglik(y, z @ cand + log_o) >= ll - 1e-10:
                    break
                step *= 0.5
            beta_new = beta + step * direction

        delta = np.inf if beta is None else np.max(np.abs(beta_new - beta))
        beta = beta_new
        eta = z @ beta + log_o
        mu = np.exp(eta)
        ll = _poisson_loglik(y, eta)
        trace.append(ll)
        if delta < tol:
            converged = True
            break

    # Refresh the factorization at the final weights for covariances.
    w = mu
    _, chol = _solve_normal(z, w, eta, columns)
    return {
        "beta": beta, "chol": chol, "mu": mu, "eta": eta, "weights": w,
        "loglik": ll, "converged": converged, "n_iter": n_iter,
        "trace": np.array(trace),
    }


def fit_glm(data: Dataset, family: str,
            max_iter: int = DEFAULT_MAX_ITER,
            tol: float = DEFAULT_TOL) -> GlmFit:
    """Fit the exposure-outcome regression for one family.

    The design is ``[1, exposure, covariates]``. The Poisson family uses a
    log link with ``log(offset)`` added to the linear predictor; the
    Gaussian family uses the identity link and converges in one weighted
    least-squares step. Convergence is declared when the largest absolute
    coefficient change drops below ``tol``.

    Parameters
    ----------
    data : Dataset
    family : {"gaussian", "poisson"}
    max_iter : int
        IRLS iteration cap; a fit that hits it is returned with
        ``converged=False``.
    tol : float
        Coefficient-change convergence tolerance.

    Returns
    -------
    GlmFit

    Raises
    ------
    ValidationError
        Family/response mismatch or invalid arguments.
    SingularDesignError
        Rank-deficient design, naming the offending column.
    """
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    _validate_family(data, family)

    z = data.design_matrix()
    columns = data.design_columns()
    n, p = z.shape
    state = _fit_core(z, data.y, data.offset, family, columns, max_iter, tol)

    h = _leverages(z, state["weights"], state["chol"])
    if family == GAUSSIAN:
        rss = float(np.sum((data.y - state["mu"]) ** 2))
        dispersion = rss / (n - p) if n > p else 0.0
        pearson = data.y - state["mu"]
    else:
        dispersion = 1.0
        pearson = (data.y - state["mu"]) / np.sqrt(state["mu"])

    identity = np.eye(p)
    cov_unscaled = scipy.linalg.cho_solve(state["chol"], identity)
    cov = dispersion * (cov_unscaled + cov_unscaled.T) / 2.0

    return GlmFit(
        family=family,
        beta_hat=state["beta"],
        cov_beta=cov,
        se_exposure=float(np.sqrt(max(cov[1, 1], 0.0))),
        mu_hat=state["mu"],
        working_weights=state["weights"],
        leverages=h,
        pearson_residuals=pearson,
        loglik=state["loglik"],
        converged=state["converged"],
        n_iter=state["n_iter"],
        columns=columns,
        dispersion=dispersion,
        loglik_trace=state["trace"],
    )


def dfbeta(fit: GlmFit, data: Dataset) -> DeviationVector:
    """Standardized one-step deletion change of the exposure coefficient.

    For each unit the one-step approximation to the exposure-coefficient
    change from refitting without that unit is computed from the converged
    fit and divided by the coefficient's standard error. Positive values
    mean deleting the unit would raise the estimate. The approximation is
    exact for the Gaussian family.

    Returns
    -------
    DeviationVector
        Deviations ``d`` plus their sample standard deviation (S - 1
        denominator).

    Raises
    ------
    ValidationError
        If the fit did not converge.
    DegenerateLeverageError
        If any unit has leverage >= 1.
    """
    if not fit.converged:
        raise ValidationError("dfbeta requires a converged fit")
    h = fit.leverages
    bad = np.flatnonzero(h >= 1.0 - 1e-12)
    if bad.size:
        raise DegenerateLeverageError(data.unit_ids[bad[0]])

    z = data.design_matrix()
    # Row of (Z' Omega Z)^{-1} for the exposure coefficient.
    a = fit.cov_beta[GlmFit.EXPOSURE_INDEX] / fit.dispersion
    resid = data.y - fit.mu_hat
    one_step = (z @ a) * resid / (1.0 - h)      # approximates beta - beta_(i)
    d = -one_step / fit.se_exposure
    return DeviationVector(d=d, sigma_d=float(np.std(d, ddof=1)))


def exact_loo_beta(data: Dataset, family: str, i: int,
                   max_iter: int = DEFAULT_MAX_ITER,
                   tol: float = DEFAULT_TOL) -> np.ndarray:
    """Full refit coefficients with unit ``i`` left out.

    Brute-force counterpart of :func:`dfbeta`: the returned vector is the
    coefficient estimate over ``[intercept, exposure, covariates]`` from a
    fresh fit on the remaining S - 1 units.

    Raises
    ------
    ValidationError
        If the leave-one-out fit is not identifiable (S < q + 3) or ``i``
        is out of range.
    SingularDesignError
        If the reduced design is rank deficient.
    """
    s, q = data.n_units, data.n_covariates
    if s < q + 3:
        raise ValidationError(f"need at least {q + 3} units for a "
                              "leave-one-out refit")
    if not 0 <= i < s:
        raise ValidationError(f"unit index {i} out of range")
    _validate_family(data, family)

    keep = np.arange(s) != i
    z = data.design_matrix()[keep]
    y = data.y[keep]
    offset = None if data.offset is None else data.offset[keep]
    state = _fit_core(z, y, offset, family, data.design_columns(),
                      max_iter, tol)
    return state["beta"]
