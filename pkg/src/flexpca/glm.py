"""Generalized linear model fitting with canonical links.

Two entry points live here:

* :func:`fit_glm` solves a single GLM by iteratively reweighted least
  squares with step halving, the textbook algorithm.
* :func:`fit_glm_grouped` solves many small independent GLMs that share
  a family in one vectorized pass. The alternating low-rank fitter uses
  it for its row and column updates, where every row (or column) of the
  grid is its own regression problem.

Both follow the same rules: dispersion is never estimated here, lack of
fit is measured by the deviance, and accepted steps never decrease the
log-likelihood.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, SingularDesignError
from .families import ETA_BOUNDARY, Bernoulli, Gaussian

__all__ = [
    "GlmProblem",
    "GlmFit",
    "fit_glm",
    "predict_eta",
    "GroupIndex",
    "fit_glm_grouped",
]

# Give up on a step after this many halvings; three consecutive
# exhausted steps count as divergence.
MAX_HALVINGS = 20
MAX_BAD_STEPS = 3


@dataclass
class GlmProblem:
    """One GLM: responses, covariate rows, optional offsets.

    ``include_intercept`` prepends a constant column to the design.
    """

    responses: np.ndarray
    covariates: np.ndarray
    family: object
    offsets: np.ndarray | None = None
    include_intercept: bool = False


@dataclass
class GlmFit:
    """Result of :func:`fit_glm`.

    ``loglik`` is evaluated at dispersion 1; ``boundary`` flags a
    Bernoulli fit stopped at quasi-separation (probabilities numerically
    0 or 1).
    """

    coefficients: np.ndarray
    loglik: float
    n_iterations: int
    converged: bool
    boundary: bool = False
    deviance: float = field(default=np.nan)


def _design(problem):
    X = np.atleast_2d(np.asarray(problem.covariates, dtype=float))
    if X.ndim != 2:
        raise SingularDesignError("covariates must form a 2-D design")
    if problem.include_intercept:
        X = np.hstack([np.ones((X.shape[0], 1)), X])
    return X


def fit_glm(problem, tol=1e-8, max_iter=100, init=None):
    """Fit one GLM by IRLS with step halving.

    Parameters
    ----------
    problem : GlmProblem
    tol : float
        Convergence threshold on the relative change in deviance.
    max_iter : int
        IRLS iteration budget; exhausting it returns ``converged=False``.
    init : array_like, optional
        Starting coefficients (default zeros).

    Returns
    -------
    GlmFit

    Raises
    ------
    SingularDesignError
        If the design is rank deficient.
    NonConvergenceError
        If the deviance increases on three consecutive fully damped
        steps; the error carries the last iterate as ``last_fit``.
    """
    family = problem.family
    y = np.asarray(problem.responses, dtype=float).ravel()
    family.validate_support(y)
    X = _design(problem)
    m, d = X.shape
    if y.size != m:
        raise SingularDesignError("responses and covariates disagree in length")
    if m < d:
        raise SingularDesignError(
            f"{m} observations cannot identify {d} coefficients"
        )
    if np.linalg.matrix_rank(X) < d:
        raise SingularDesignError("design matrix is rank deficient")
    offsets = (
        np.zeros(m)
        if problem.offsets is None
        else np.asarray(problem.offsets, dtype=float).ravel()
    )

    coef = np.zeros(d) if init is None else np.asarray(init, dtype=float).copy()
    eta = offsets + X @ coef
    loglik = float(np.sum(family.loglik_kernel(y, eta)))
    deviance = _safe_deviance(family, y, eta)
    bad_steps = 0
    converged = False
    boundary = False
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        mu = family.clamp_mu(family.inv_link(eta))
        w = family.variance(mu)
        z = (eta - offsets) + (y - mu) / w
        wX = X * w[:, None]
        gram = X.T @ wX
        rhs = wX.T @ z
        try:
            cand = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            raise SingularDesignError(
                "weighted design became singular during IRLS"
            ) from None

        # Step halving: accept only steps that do not decrease the
        # log-likelihood.
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            eta_cand = offsets + X @ cand
            ll_cand = float(np.sum(family.loglik_kernel(y, eta_cand)))
            if np.isfinite(ll_cand) and ll_cand >= loglik:
                accepted = True
                break
            cand = 0.5 * (cand + coef)
        if not accepted:
            if abs(ll_cand - loglik) <= 1e-10 * (1.0 + abs(loglik)):
                # The fully damped candidate is numerically indistinguishable
                # from the current iterate: a fixed point, not divergence.
                converged = True
                break
            bad_steps += 1
            if bad_steps >= MAX_BAD_STEPS:
                last = GlmFit(
                    coefficients=coef,
                    loglik=_reported_loglik(family, y, eta),
                    n_iterations=n_iter,
                    converged=False,
                    deviance=deviance,
                )
                raise NonConvergenceError(
                    f"deviance increased on {MAX_BAD_STEPS} consecutive "
                    "damped IRLS steps",
                    last_fit=last,
                )
            continue
        bad_steps = 0
        coef, eta, loglik = cand, eta_cand, ll_cand

        new_deviance = _safe_deviance(family, y, eta)
        rel = abs(new_deviance - deviance) / (1.0 + abs(new_deviance))
        deviance = new_deviance
        if isinstance(family, Bernoulli) and np.any(np.abs(eta) > ETA_BOUNDARY):
            warnings.warn(
                "bernoulli fit reached the boundary of the parameter space "
                "(quasi-separation); coefficients are not finite MLEs",
                stacklevel=2,
            )
            boundary = True
            converged = True
            break
        if rel < tol:
            converged = True
            break

    return GlmFit(
        coefficients=coef,
        loglik=_reported_loglik(family, y, eta),
        n_iterations=n_iter,
        converged=converged,
        boundary=boundary,
        deviance=deviance,
    )


def _safe_deviance(family, y, eta):
    mu = family.clamp_mu(family.inv_link(eta))
    return float(np.sum(family.deviance_term(y, mu)))


def _reported_loglik(family, y, eta):
    return float(np.sum(family.loglik_term(y, eta, 1.0)))


def predict_eta(fit, covariates, offsets=None, include_intercept=False):
    """Linear predictors for new covariate rows under a fitted GLM."""
    X = np.atleast_2d(np.asarray(covariates, dtype=float))
    if include_intercept:
        X = np.hstack([np.ones((X.shape[0], 1)), X])
    eta = X @ fit.coefficients
    if offsets is not None:
        eta = eta + np.asarray(offsets, dtype=float).ravel()
    return eta


class GroupIndex:
    """Sort-based bookkeeping for per-group accumulation.

    Given a group id per observation, precomputes the stable sort order
    and the group boundaries so that per-group sums reduce to
    ``numpy.add.reduceat`` over contiguous slices. Every group in
    ``range(n_groups)`` must be nonempty.
    """

    def __init__(self, group_ids, n_groups):
        group_ids = np.asarray(group_ids, dtype=np.int64)
        counts = np.bincount(group_ids, minlength=n_groups)
        if np.any(counts == 0):
            empty = np.nonzero(counts == 0)[0]
            raise SingularDesignError(f"groups {empty.tolist()} have no data")
        self.n_groups = int(n_groups)
        self.order = np.argsort(group_ids, kind="stable")
        self.counts = counts
        self.starts = np.zeros(n_groups, dtype=np.int64)
        np.cumsum(counts[:-1], out=self.starts[1:])
        self.sorted_ids = np.repeat(np.arange(n_groups), counts)

    def sum(self, values):
        """Per-group sums of an array already in sorted order.

        Sums that overflow to infinity are meaningful here (they arise
        from rejected trial steps whose likelihood is vanishing), so the
        overflow warning is suppressed.
        """
        with np.errstate(over="ignore"):
            return np.add.reduceat(values, self.starts, axis=0)

    def max(self, values):
        return np.maximum.reduceat(values, self.starts, axis=0)


def _drop_zero_columns(Z, has_intercept):
    """Identify identically zero covariate columns.

    Such columns carry no information; they are excluded from the solve
    and their coefficients pinned at zero. A design left with no columns
    at all is unsolvable.
    """
    live = np.nonzero(np.any(Z != 0.0, axis=0))[0]
    if live.size == 0 and not has_intercept:
        raise SingularDesignError("design matrix is identically zero")
    return live


def _batched_solve(gram, rhs, group_names, kind):
    try:
        return np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        ranks = np.linalg.matrix_rank(gram)
        bad = np.nonzero(ranks < gram.shape[-1])[0]
        names = [group_names[g] if group_names is not None else g for g in bad]
        raise SingularDesignError(
            f"singular design for {kind} {names}"
        ) from None


def fit_glm_grouped(
    y,
    Z,
    group_index,
    family,
    offsets=None,
    prior_weights=None,
    include_intercept=False,
    init=None,
    tol=1e-8,
    max_iter=100,
    group_names=None,
    kind="group",
):
    """Fit one GLM per group, vectorized across groups.

    All array arguments must already be in the sort order of
    ``group_index`` (its ``order`` attribute applied to the raw data).

    Parameters
    ----------
    y : (m,) responses, sorted by group.
    Z : (m, d) covariate rows, sorted by group.
    group_index : GroupIndex
    family : Family
    offsets : (m,) optional, sorted by group.
    prior_weights : (m,) optional inverse-dispersion weights.
    include_intercept : bool
        Prepend a constant column to every group's design.
    init : (n_groups, d_total) starting coefficients; default zeros.
    tol, max_iter : IRLS controls per group.
    group_names : sequence, optional
        Labels used in error messages (defaults to group indices).
    kind : str
        Noun for error messages, e.g. ``"row"`` or ``"column"``.

    Returns
    -------
    coef : (n_groups, d_total) ndarray
    converged : (n_groups,) bool ndarray
    boundary : (n_groups,) bool ndarray
    n_iter : int
        IRLS iterations used (1 for the exact Gaussian solve).
    """
    gi = group_index
    m = y.size
    if include_intercept:
        Zfull = np.empty((m, Z.shape[1] + 1))
        Zfull[:, 0] = 1.0
        Zfull[:, 1:] = Z
    else:
        Zfull = Z
    d = Zfull.shape[1]
    live = _drop_zero_columns(Z, include_intercept)
    if include_intercept:
        live = np.concatenate(([0], live + 1))
    else:
        if live.size == 0:
            raise SingularDesignError("design matrix is identically zero")
    Zs = Zfull[:, live] if live.size != d else Zfull
    ds = Zs.shape[1]

    offs = np.zeros(m) if offsets is None else offsets
    pw = np.ones(m) if prior_weights is None else prior_weights
    G = gi.n_groups

    def expand(c):
        return np.full((G, d), 0.0) if c is None else c

    def pack(cs):
        coef = np.zeros((G, d))
        coef[:, live] = cs
        return coef

    if init is None:
        coef_s = np.zeros((G, ds))
    else:
        coef_s = np.asarray(init, dtype=float)[:, live].copy()

    gaussian = isinstance(family, Gaussian)
    bernoulli = isinstance(family, Bernoulli)

    if gaussian:
        # Identity link, constant variance: IRLS is a single exact
        # weighted least squares solve per group.
        resid = y - offs
        wZ = Zs * pw[:, None]
        gram = gi.sum((wZ[:, :, None] * Zs[:, None, :]).reshape(m, ds * ds))
        gram = gram.reshape(G, ds, ds)
        rhs = gi.sum(wZ * resid[:, None])
        coef_s = _batched_solve(gram, rhs, group_names, kind)
        return (
            pack(coef_s),
            np.ones(G, dtype=bool),
            np.zeros(G, dtype=bool),
            1,
        )

    eta = offs + np.einsum("ij,ij->i", Zs, coef_s[gi.sorted_ids])
    kern = gi.sum(pw * family.loglik_kernel(y, eta))
    dev = gi.sum(pw * family.deviance_term(y, family.clamp_mu(family.inv_link(eta))))
    done = np.zeros(G, dtype=bool)
    boundary = np.zeros(G, dtype=bool)
    stuck = np.zeros(G, dtype=np.int8)
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        mu = family.clamp_mu(family.inv_link(eta))
        v = family.variance(mu)
        w = pw * v
        z = (eta - offs) + (y - mu) / v
        wZ = Zs * w[:, None]
        gram = gi.sum((wZ[:, :, None] * Zs[:, None, :]).reshape(m, ds * ds))
        gram = gram.reshape(G, ds, ds)
        rhs = gi.sum(wZ * z[:, None])
        cand = _batched_solve(gram, rhs, group_names, kind)
        frozen = done | boundary
        cand[frozen] = coef_s[frozen]

        # Per-group step halving toward the current iterate.
        for _ in range(MAX_HALVINGS + 1):
            eta_cand = offs + np.einsum("ij,ij->i", Zs, cand[gi.sorted_ids])
            kern_cand = gi.sum(pw * family.loglik_kernel(y, eta_cand))
            bad = ~frozen & ~(np.isfinite(kern_cand) & (kern_cand >= kern))
            if not np.any(bad):
                break
            cand[bad] = 0.5 * (cand[bad] + coef_s[bad])
        still_bad = ~frozen & ~(np.isfinite(kern_cand) & (kern_cand >= kern))
        if np.any(still_bad):
            cand[still_bad] = coef_s[still_bad]
            # A fully damped candidate within float noise of the current
            # kernel marks a fixed point, not a failing step.
            at_fp = still_bad & (
                np.abs(kern_cand - kern) <= 1e-10 * (1.0 + np.abs(kern))
            )
            done |= at_fp
            still_bad &= ~at_fp
        if np.any(still_bad):
            stuck[still_bad] += 1
            if np.any(stuck >= MAX_BAD_STEPS):
                g = int(np.nonzero(stuck >= MAX_BAD_STEPS)[0][0])
                name = group_names[g] if group_names is not None else g
                raise NonConvergenceError(
                    f"IRLS failed to improve {kind} {name} after repeated "
                    "step halving"
                )
        stuck[~still_bad] = 0

        coef_s = cand
        eta = offs + np.einsum("ij,ij->i", Zs, coef_s[gi.sorted_ids])
        kern = gi.sum(pw * family.loglik_kernel(y, eta))
        mu = family.clamp_mu(family.inv_link(eta))
        dev_new = gi.sum(pw * family.deviance_term(y, mu))
        rel = np.abs(dev_new - dev) / (1.0 + np.abs(dev_new))
        dev = dev_new
        done = done | (rel < tol)
        if bernoulli:
            at_edge = gi.max(np.abs(eta)) > ETA_BOUNDARY
            newly = at_edge & ~boundary
            if np.any(newly):
                warnings.warn(
                    "bernoulli fit reached the boundary of the parameter "
                    f"space for {kind}(s) "
                    f"{np.nonzero(newly)[0].tolist()} (quasi-separation)",
                    stacklevel=2,
                )
            boundary |= at_edge
        if np.all(done | boundary):
            break

    return pack(coef_s), done | boundary, boundary, n_iter
