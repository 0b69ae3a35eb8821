"""Alternating maximum likelihood for low-rank exponential-family models.

The model for an observed cell (i, j) of an ``n`` x ``p`` grid is

    link(mu_ij) = gamma_j + sum_r alpha_ir * beta_jr

fitted by alternating between row regressions (update ``alpha`` holding
``beta`` and ``gamma`` fixed) and column regressions (update ``beta``
and ``gamma`` holding ``alpha`` fixed). Each half step solves exact
GLMs, so the log-likelihood never decreases along a chain; the fitter
records it after every half step.

Three model variants are supported:

* ``"simple"``: no column intercepts, one shared dispersion.
* ``"covariance"``: free column intercepts ``gamma_j``, one shared
  dispersion.
* ``"correlation"``: column intercepts plus one dispersion per column;
  Gaussian responses only. The per-column dispersions are updated inside
  the alternation (each update is itself a conditional maximum), which
  makes the fit scale-equivariant per column.

Chains from several random starts are run and the best final
log-likelihood wins; ties within 1e-10 go to the lowest start index.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    FlexpcaError,
    NonConvergenceError,
    SaturatedModelError,
)
from .families import Gaussian, QuasiPoisson, family_from_name
from .glm import GroupIndex, fit_glm_grouped

__all__ = [
    "VARIANTS",
    "FpcaConfig",
    "FpcaFit",
    "init_beta",
    "row_step",
    "col_step",
    "fit_fpca",
    "estimate_dispersion",
    "linear_predictor",
    "variant_has_gamma",
    "min_coverage",
]

VARIANTS = ("simple", "covariance", "correlation")

# Winning chains must beat the incumbent by more than this margin;
# otherwise the earlier start keeps the win.
TIE_TOLERANCE = 1e-10

# Per-column dispersions are floored here so that a column fitted
# exactly (zero residual) cannot produce infinite weights.
PHI_FLOOR = 1e-12


def variant_has_gamma(variant):
    """Whether the variant carries free column intercepts."""
    return variant in ("covariance", "correlation")


def min_coverage(k, variant):
    """Minimum observations required in every row and column."""
    return k + 2 if variant_has_gamma(variant) else k + 1


@dataclass
class FpcaConfig:
    """Controls for :func:`fit_fpca`.

    Attributes
    ----------
    k : int
        Number of multiplicative components, at least 1.
    n_starts : int
        Number of random restarts; start ``t`` is seeded ``seed + t``.
    seed : int
        Base seed for the restarts.
    tol : float
        Convergence threshold on the relative change of the chain
        objective between outer iterations.
    max_outer_iter : int
        Outer iteration budget per chain.
    """

    k: int
    n_starts: int = 5
    seed: int = 0
    tol: float = 1e-7
    max_outer_iter: int = 500
    glm_tol: float = 1e-8
    glm_max_iter: int = 100

    def validate(self):
        if int(self.k) < 1:
            raise DomainError(f"k must be a positive integer, got {self.k}")
        if int(self.n_starts) < 1:
            raise DomainError("n_starts must be at least 1")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if int(self.max_outer_iter) < 1:
            raise DomainError("max_outer_iter must be at least 1")


@dataclass
class FpcaFit:
    """A fitted low-rank model.

    Attributes
    ----------
    alpha : (n_rows, k) row scores.
    beta : (n_cols, k) column loadings.
    gamma : (n_cols,) column intercepts (all zeros for the simple variant).
    phi : float or (n_cols,) ndarray
        Estimated dispersion (1.0 for families without one). The
        per-column vector applies to the correlation variant.
    loglik : float
        Log-likelihood at the fitted parameters and estimated dispersion.
    deviance : float
        Sum of unit deviances at the fitted means.
    loglik_trace : numpy.ndarray
        Chain objective after each outer iteration of the winning chain
        (evaluated at dispersion 1 except for the correlation variant,
        which tracks its own full likelihood).
    halfstep_trace : numpy.ndarray
        The same objective after every half step; non-decreasing.
    start_index : int
        Which random start produced the winning chain.
    converged : bool
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    phi: object
    loglik: float
    deviance: float
    loglik_trace: np.ndarray
    start_index: int
    converged: bool
    halfstep_trace: np.ndarray = field(default=None, repr=False)
    n_outer_iterations: int = 0
    variant: str = "simple"
    family_name: str = "gaussian"
    k: int = 0
    n_rows: int = 0
    n_cols: int = 0

    def eta(self, rows, cols):
        """Linear predictors for the given cells."""
        out = np.einsum("ij,ij->i", self.alpha[rows], self.beta[cols])
        if self.gamma is not None:
            out = out + self.gamma[cols]
        return out


def init_beta(p, k, seed):
    """Standard normal starting loadings from a seeded generator."""
    return np.random.default_rng(seed).standard_normal((p, k))


def linear_predictor(s, alpha, beta, gamma=None):
    """Linear predictors at the observed cells, in entry order."""
    eta = np.einsum("ij,ij->i", alpha[s.rows], beta[s.cols])
    if gamma is not None:
        eta = eta + gamma[s.cols]
    return eta


def _check_variant(variant):
    if variant not in VARIANTS:
        raise DomainError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def _normalize_family(family, variant):
    if isinstance(family, str):
        family = family_from_name(family)
    if variant == "correlation":
        if not isinstance(family, Gaussian):
            raise DomainError(
                "the correlation variant requires a gaussian family "
                "(it estimates one dispersion per column)"
            )
        if family.dispersion != "per_column":
            family = Gaussian(dispersion="per_column")
    elif getattr(family, "dispersion", None) == "per_column":
        raise DomainError(
            "per-column dispersion is only available with the correlation variant"
        )
    return family


def _check_coverage(s, k, variant):
    need = min_coverage(k, variant)
    rows = np.nonzero(s.cover_rows() < need)[0]
    cols = np.nonzero(s.cover_cols() < need)[0]
    if rows.size or cols.size:
        raise CoverageError(
            f"rank {k} ({variant}) needs at least {need} observations per "
            f"row and column; deficient rows {rows.tolist()}, "
            f"cols {cols.tolist()}",
            rows=rows.tolist(),
            cols=cols.tolist(),
        )


class _Workspace:
    """Precomputed sort orders and sorted views for one data set."""

    def __init__(self, s):
        self.s = s
        self.gi_rows = GroupIndex(s.rows, s.n_rows)
        self.gi_cols = GroupIndex(s.cols, s.n_cols)
        self.y_by_row = s.values[self.gi_rows.order]
        self.cols_by_row = s.cols[self.gi_rows.order]
        self.y_by_col = s.values[self.gi_cols.order]
        self.rows_by_col = s.rows[self.gi_cols.order]


def row_step(s, beta, gamma, family):
    """Update all row scores by one exact GLM per row.

    Each row's responses are regressed on the current column loadings,
    with the column intercepts entering as offsets. Returns the new
    ``alpha`` matrix.
    """
    family = family_from_name(family) if isinstance(family, str) else family
    ws = _Workspace(s)
    offs = gamma[ws.cols_by_row] if gamma is not None else None
    coef, _, _, _ = fit_glm_grouped(
        ws.y_by_row,
        np.asarray(beta, dtype=float)[ws.cols_by_row],
        ws.gi_rows,
        family,
        offsets=offs,
        kind="row",
    )
    return coef


def col_step(s, alpha, variant, family):
    """Update all column loadings (and intercepts) by one GLM per column.

    Returns ``(beta, gamma)``; ``gamma`` is the zero vector for the
    simple variant, which has no column intercepts.
    """
    _check_variant(variant)
    family = family_from_name(family) if isinstance(family, str) else family
    ws = _Workspace(s)
    has_gamma = variant_has_gamma(variant)
    coef, _, _, _ = fit_glm_grouped(
        ws.y_by_col,
        np.asarray(alpha, dtype=float)[ws.rows_by_col],
        ws.gi_cols,
        family,
        include_intercept=has_gamma,
        kind="column",
    )
    if has_gamma:
        return coef[:, 1:], coef[:, 0]
    return coef, np.zeros(s.n_cols)


def _chain_objective(s, family, variant, eta, phi_cols, const_phi1):
    """The objective each chain maximizes and traces.

    Simple and covariance variants track the full log-likelihood at
    dispersion 1 (dispersion rescales it monotonically, so the argmax is
    unchanged). The correlation variant tracks its own likelihood at the
    current per-column dispersions, including their normalizing terms.
    """
    if phi_cols is None:
        kernel = family.loglik_kernel(s.values, eta)
        return float(np.sum(kernel)) + const_phi1
    phi_e = phi_cols[s.cols]
    return float(np.sum(family.loglik_term(s.values, eta, phi_e)))


def _column_ml_variances(ws):
    """Per-column maximum-likelihood variances around the column means."""
    s = ws.s
    counts = ws.gi_cols.counts
    means = np.bincount(s.cols, weights=s.values, minlength=s.n_cols) / counts
    rss = np.bincount(
        s.cols, weights=(s.values - means[s.cols]) ** 2, minlength=s.n_cols
    )
    if np.any(rss == 0.0):
        bad = np.nonzero(rss == 0.0)[0].tolist()
        raise DomainError(
            f"column(s) {bad} have zero variance; per-column dispersions "
            "cannot be formed"
        )
    return rss / counts


def _run_chain(ws, variant, family, config, start_seed, phi_cols):
    """One restart of the alternating fit.

    ``phi_cols`` carries the per-column dispersions the correlation
    variant holds fixed throughout the chain (None otherwise). Each half
    step solves its generalized linear subproblems exactly, so the
    traced objective never decreases beyond roundoff.
    """
    s = ws.s
    n, p, k = s.n_rows, s.n_cols, config.k
    has_gamma = variant_has_gamma(variant)
    correlation = variant == "correlation"

    beta = init_beta(p, k, start_seed)
    gamma = np.zeros(p) if has_gamma else None
    alpha = np.zeros((n, k))

    const_phi1 = float(np.sum(family.loglik_offset(s.values, 1.0)))
    pw_row = 1.0 / phi_cols[ws.cols_by_row] if correlation else None
    pw_col = 1.0 / phi_cols[ws.gi_cols.sorted_ids] if correlation else None

    halfstep = []
    trace = []
    prev = -np.inf
    converged = False
    n_outer = 0

    col_init = None
    for n_outer in range(1, config.max_outer_iter + 1):
        offs = gamma[ws.cols_by_row] if has_gamma else None
        alpha, _, _, _ = fit_glm_grouped(
            ws.y_by_row,
            beta[ws.cols_by_row],
            ws.gi_rows,
            family,
            offsets=offs,
            prior_weights=pw_row,
            init=alpha,
            tol=config.glm_tol,
            max_iter=config.glm_max_iter,
            kind="row",
        )
        eta = linear_predictor(s, alpha, beta, gamma)
        halfstep.append(_chain_objective(s, family, variant, eta, phi_cols, const_phi1))

        if col_init is None or not has_gamma:
            col_init = np.hstack([gamma[:, None], beta]) if has_gamma else beta
        else:
            col_init[:, 0] = gamma
            col_init[:, 1:] = beta
        coef, _, _, _ = fit_glm_grouped(
            ws.y_by_col,
            alpha[ws.rows_by_col],
            ws.gi_cols,
            family,
            prior_weights=pw_col,
            include_intercept=has_gamma,
            init=col_init,
            tol=config.glm_tol,
            max_iter=config.glm_max_iter,
            kind="column",
        )
        if has_gamma:
            gamma, beta = coef[:, 0].copy(), coef[:, 1:].copy()
        else:
            beta = coef
        eta = linear_predictor(s, alpha, beta, gamma)
        halfstep.append(_chain_objective(s, family, variant, eta, phi_cols, const_phi1))

        current = halfstep[-1]
        trace.append(current)
        if np.isfinite(prev):
            drop = current - prev
            if drop < -1e-6 * (1.0 + abs(prev)):
                warnings.warn(
                    f"chain objective decreased by {-drop:.3e} at outer "
                    f"iteration {n_outer}",
                    stacklevel=2,
                )
            if abs(current - prev) < config.tol * (1.0 + abs(prev)):
                converged = True
                break
        prev = current

    return {
        "alpha": alpha,
        "beta": beta,
        "gamma": gamma,
        "loglik": trace[-1],
        "trace": np.asarray(trace),
        "halfstep": np.asarray(halfstep),
        "converged": converged,
        "n_outer": n_outer,
    }


def fit_fpca(s, variant, family, config, fixed_phi=None):
    """Fit the low-rank model by alternating GLMs with random restarts.

    Parameters
    ----------
    s : ObservationSet
        Observed cells; every row and column must carry at least
        ``k + 1`` observations (``k + 2`` when the variant has column
        intercepts).
    variant : str
        ``"simple"``, ``"covariance"`` or ``"correlation"``.
    family : Family or str
        Response family. The correlation variant requires Gaussian.
    config : FpcaConfig
    fixed_phi : (n_cols,) ndarray, optional
        Hold the per-column dispersions fixed at these values instead of
        estimating them (correlation variant only). Used when comparing
        models of different rank under one shared dispersion.

    Returns
    -------
    FpcaFit

    Raises
    ------
    CoverageError
        If some row or column has too few observations for rank ``k``.
    NonConvergenceError
        If every restart fails numerically.
    """
    _check_variant(variant)
    config.validate()
    family = _normalize_family(family, variant)
    family.validate_support(s.values)
    k = int(config.k)
    _check_coverage(s, k, variant)
    if fixed_phi is not None:
        if variant != "correlation":
            raise DomainError("fixed_phi applies only to the correlation variant")
        fixed_phi = np.asarray(fixed_phi, dtype=float)
        if fixed_phi.shape != (s.n_cols,) or np.any(fixed_phi <= 0):
            raise DomainError("fixed_phi must be positive with one entry per column")

    ws = _Workspace(s)
    phi_chain = None
    if variant == "correlation":
        # Dispersions stay fixed during the alternation; without supplied
        # values, use the marginal per-column maximum-likelihood variances.
        phi_chain = fixed_phi if fixed_phi is not None else _column_ml_variances(ws)
    best = None
    best_index = -1
    failures = []
    for t in range(int(config.n_starts)):
        try:
            result = _run_chain(ws, variant, family, config, config.seed + t, phi_chain)
        except FlexpcaError as exc:
            failures.append(f"start {t}: {exc}")
            continue
        if best is None or result["loglik"] > best["loglik"] + TIE_TOLERANCE:
            best = result
            best_index = t
    if best is None:
        raise NonConvergenceError(
            "every restart failed: " + "; ".join(failures)
        )
    if failures:
        warnings.warn(
            f"{len(failures)} of {config.n_starts} restarts failed and were "
            "skipped: " + "; ".join(failures),
            stacklevel=2,
        )

    fit = FpcaFit(
        alpha=best["alpha"],
        beta=best["beta"],
        gamma=best["gamma"] if best["gamma"] is not None else np.zeros(s.n_cols),
        phi=1.0,
        loglik=np.nan,
        deviance=np.nan,
        loglik_trace=best["trace"],
        start_index=best_index,
        converged=best["converged"],
        halfstep_trace=best["halfstep"],
        n_outer_iterations=best["n_outer"],
        variant=variant,
        family_name=family.name,
        k=k,
        n_rows=s.n_rows,
        n_cols=s.n_cols,
    )
    if not fit.converged:
        warnings.warn(
            f"winning chain (start {best_index}) did not converge within "
            f"{config.max_outer_iter} outer iterations",
            stacklevel=2,
        )

    eta = linear_predictor(s, fit.alpha, fit.beta, fit.gamma)
    mu = family.inv_link(eta)
    fit.deviance = float(np.sum(family.deviance_term(s.values, family.clamp_mu(mu))))
    if fixed_phi is not None:
        fit.phi = fixed_phi
    elif family.has_dispersion:
        fit.phi = estimate_dispersion(s, fit, variant, family)
    else:
        fit.phi = 1.0
    phi_cells = fit.phi[s.cols] if np.ndim(fit.phi) == 1 else fit.phi
    # A perfect fit estimates the dispersion as exactly zero; evaluate the
    # reported likelihood just off that boundary so it stays a real number.
    phi_safe = np.maximum(phi_cells, PHI_FLOOR)
    fit.loglik = float(np.sum(family.loglik_term(s.values, eta, phi_safe)))
    return fit


def estimate_dispersion(s, fit, variant, family):
    """Estimate the dispersion of a fitted model, degrees-of-freedom aware.

    Gaussian with a shared dispersion uses the residual sum of squares
    over ``n_obs - df``; the correlation variant distributes the model
    degrees of freedom across columns in proportion to their coverage;
    quasi-Poisson uses the Pearson statistic over ``n_obs - df``.
    Families without a free dispersion return 1.0.

    Raises
    ------
    SaturatedModelError
        If residual degrees of freedom are nonpositive.
    """
    from .selection import degrees_of_freedom

    family = _normalize_family(family, variant)
    if not family.has_dispersion:
        return 1.0
    eta = linear_predictor(s, fit.alpha, fit.beta, fit.gamma)
    mu = family.inv_link(eta)
    df = degrees_of_freedom(fit.k, s.n_rows, s.n_cols, variant)
    resid2 = (s.values - mu) ** 2

    if isinstance(family, QuasiPoisson):
        denom = s.n_obs - df
        if denom <= 0:
            raise SaturatedModelError(
                f"model saturated: {df} degrees of freedom for {s.n_obs} cells"
            )
        pearson = float(np.sum(resid2 / family.clamp_mu(mu)))
        return pearson / denom

    if family.dispersion == "per_column":
        cover = s.cover_cols().astype(float)
        denom = cover - df * cover / s.n_obs
        if np.any(denom <= 0):
            raise SaturatedModelError(
                f"model saturated: {df} degrees of freedom for {s.n_obs} cells "
                "leave no residual degrees of freedom in some column"
            )
        rss = np.bincount(s.cols, weights=resid2, minlength=s.n_cols)
        return rss / denom

    denom = s.n_obs - df
    if denom <= 0:
        raise SaturatedModelError(
            f"model saturated: {df} degrees of freedom for {s.n_obs} cells"
        )
    return float(np.sum(resid2)) / denom
