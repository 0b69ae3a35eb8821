"""Rank selection by information criteria or cross-validation.

Two selectors are provided.

:func:`select_k_gic` fits every candidate rank and minimizes

    GIC_kappa(k) = -2 * loglik_k + kappa * df_k

where ``df_k = k (n + p - k)`` counts the free parameters of the rank-k
mean structure (plus ``p`` column intercepts when the variant has them).
``kappa = log(n_obs)`` gives BIC, ``kappa = 2`` gives AIC. For families
with a free dispersion, all candidates are compared under one shared
dispersion estimated once at a deliberately generous reference rank;
otherwise small ranks would inflate the dispersion estimate and the
criterion would not be comparing the same likelihood.

:func:`select_k_cv` holds out a random fraction of the observed cells,
fits on the rest, and scores candidates by the total test deviance,
averaged over repetitions.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import random_split
from .errors import CoverageError, DomainError
from .families import family_from_name
from .fitting import (
    FpcaConfig,
    fit_fpca,
    linear_predictor,
    min_coverage,
    variant_has_gamma,
)

__all__ = [
    "degrees_of_freedom",
    "gic",
    "GicResult",
    "CvResult",
    "select_k_gic",
    "select_k_cv",
]


def degrees_of_freedom(k, n_rows, n_cols, variant="simple"):
    """Free parameters of the rank-``k`` mean structure.

    A rank-k factorization on an n x p grid has ``k * (n + p - k)``
    identifiable parameters; variants with column intercepts add ``p``.
    """
    k = int(k)
    if k < 0:
        raise DomainError("k must be nonnegative")
    df = k * (n_rows + n_cols - k)
    if variant_has_gamma(variant):
        df += n_cols
    return df


def gic(loglik, kappa, df):
    """Generalized information criterion value."""
    return kappa * df - 2.0 * loglik


def _resolve_kappa(rule, n_obs):
    if isinstance(rule, str):
        name = rule.lower()
        if name == "bic":
            return float(np.log(n_obs)), "bic"
        if name == "aic":
            warnings.warn(
                "AIC (kappa=2) is not selection consistent for rank "
                "selection here and tends to overfit; BIC is recommended",
                stacklevel=3,
            )
            return 2.0, "aic"
        raise DomainError(f"unknown kappa rule {rule!r}; use 'bic', 'aic' or a number")
    kappa = float(rule)
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    return kappa, "custom"


@dataclass
class GicResult:
    """Outcome of :func:`select_k_gic`.

    ``table`` holds one ``(k, loglik, df, gic_value)`` row per candidate,
    with log-likelihoods evaluated under the shared dispersion when the
    family has one. ``fits`` maps each candidate to its fitted model.
    """

    chosen_k: int
    table: list
    kappa: float
    kappa_rule: str
    phi_reference: object
    k_ref: int | None
    n_obs: int = 0
    fits: dict = field(default=None, repr=False)

    def rescore(self, rule):
        """Re-rank the same fitted candidates under a different kappa.

        No refitting happens; the stored log-likelihoods are reused.
        """
        kappa, name = _resolve_kappa(rule, self.n_obs)
        table = [(k, ll, df, gic(ll, kappa, df)) for (k, ll, df, _) in self.table]
        chosen = min(table, key=lambda row: (row[3], row[0]))[0]
        return GicResult(
            chosen_k=chosen,
            table=table,
            kappa=kappa,
            kappa_rule=name,
            phi_reference=self.phi_reference,
            k_ref=self.k_ref,
            n_obs=self.n_obs,
            fits=self.fits,
        )


@dataclass
class CvResult:
    """Outcome of :func:`select_k_cv`.

    ``table`` holds one ``(k, mean_test_deviance)`` row per candidate;
    ``per_repetition`` is a (n_repetitions, n_candidates) array of test
    deviances, and ``test_sizes`` records how many cells each repetition
    held out.
    """

    chosen_k: int
    table: list
    per_repetition: np.ndarray
    test_sizes: np.ndarray
    q: float
    n_repetitions: int
    split_seeds: list


def _validate_candidates(s, variant, candidates):
    candidates = sorted({int(k) for k in candidates})
    if not candidates:
        raise DomainError("candidate list is empty")
    if candidates[0] < 1:
        raise DomainError("candidate ranks must be at least 1")
    worst = candidates[-1]
    need = min_coverage(worst, variant)
    low_rows = np.nonzero(s.cover_rows() < need)[0]
    low_cols = np.nonzero(s.cover_cols() < need)[0]
    if low_rows.size or low_cols.size:
        raise CoverageError(
            f"candidate rank {worst} needs {need} observations per row and "
            f"column; deficient rows {low_rows.tolist()}, "
            f"cols {low_cols.tolist()}",
            rows=low_rows.tolist(),
            cols=low_cols.tolist(),
        )
    return candidates


def _coverage_bound(s, variant):
    """Largest rank the coverage allows."""
    slack = 2 if variant_has_gamma(variant) else 1
    return int(min(s.cover_rows().min(), s.cover_cols().min())) - slack


def _candidate_loglik(s, fit, family, phi_ref):
    """Candidate log-likelihood under the shared dispersion."""
    if phi_ref is None:
        return fit.loglik
    eta = linear_predictor(s, fit.alpha, fit.beta, fit.gamma)
    phi_cells = phi_ref[s.cols] if np.ndim(phi_ref) == 1 else phi_ref
    return float(np.sum(family.loglik_term(s.values, eta, phi_cells)))


def select_k_gic(
    s,
    variant,
    family,
    candidates,
    rule="bic",
    config=None,
    k_ref=None,
):
    """Choose the rank minimizing a generalized information criterion.

    Parameters
    ----------
    s : ObservationSet
    variant, family : model specification as in :func:`fit_fpca`.
    candidates : iterable of int
        Ranks to compare; each must satisfy the coverage requirement.
    rule : {"bic", "aic"} or float
        ``"bic"`` uses ``kappa = log(n_obs)``; ``"aic"`` uses 2 (with a
        consistency warning); a number is used as kappa directly.
    config : FpcaConfig, optional
        Fitting controls; its ``k`` field is overridden per candidate.
    k_ref : int, optional
        Reference rank for the shared dispersion (families with one).
        Defaults to ``max(candidates) + 2``, capped by coverage. Must be
        at least ``max(candidates)``.

    Returns
    -------
    GicResult

    Notes
    -----
    Log-likelihoods of nested candidates should be non-decreasing in the
    rank; a violation beyond 1e-6 means a restart got trapped, so the
    offending fit is retried once with twice the restarts.
    """
    family = family_from_name(family) if isinstance(family, str) else family
    candidates = _validate_candidates(s, variant, candidates)
    if config is None:
        config = FpcaConfig(k=candidates[0])
    kappa, rule_name = _resolve_kappa(rule, s.n_obs)

    phi_ref = None
    ref_used = None
    fixed_phi = None
    fits = {}
    if family.has_dispersion:
        bound = _coverage_bound(s, variant)
        ref_used = min(candidates[-1] + 2, bound) if k_ref is None else int(k_ref)
        if ref_used < candidates[-1]:
            raise DomainError(
                f"reference rank {ref_used} is below the largest candidate "
                f"{candidates[-1]}"
            )
        ref_fit = fit_fpca(s, variant, family, replace(config, k=ref_used))
        phi_ref = ref_fit.phi
        if variant == "correlation":
            fixed_phi = np.asarray(phi_ref, dtype=float)

    lls = {}
    for k in candidates:
        fit = fit_fpca(s, variant, family, replace(config, k=k), fixed_phi=fixed_phi)
        fits[k] = fit
        lls[k] = _candidate_loglik(s, fit, family, phi_ref)

    # Nested ranks cannot lose likelihood; retry trapped fits harder.
    for lo, hi in zip(candidates, candidates[1:]):
        if lls[hi] < lls[lo] - 1e-6:
            warnings.warn(
                f"log-likelihood decreased from rank {lo} to {hi} "
                f"({lls[lo]:.6f} -> {lls[hi]:.6f}); refitting rank {hi} "
                "with twice the restarts",
                stacklevel=2,
            )
            retry = fit_fpca(
                s,
                variant,
                family,
                replace(config, k=hi, n_starts=2 * config.n_starts),
                fixed_phi=fixed_phi,
            )
            retry_ll = _candidate_loglik(s, retry, family, phi_ref)
            if retry_ll > lls[hi]:
                fits[hi], lls[hi] = retry, retry_ll

    n, p = s.n_rows, s.n_cols
    table = []
    for k in candidates:
        df = degrees_of_freedom(k, n, p, variant)
        table.append((k, lls[k], df, gic(lls[k], kappa, df)))
    chosen = min(table, key=lambda row: (row[3], row[0]))[0]
    return GicResult(
        chosen_k=chosen,
        table=table,
        kappa=kappa,
        kappa_rule=rule_name,
        phi_reference=phi_ref,
        k_ref=ref_used,
        n_obs=s.n_obs,
        fits=fits,
    )


def select_k_cv(
    s,
    variant,
    family,
    candidates,
    q=0.2,
    n_repetitions=10,
    config=None,
):
    """Choose the rank minimizing held-out test deviance.

    Each repetition sends every observed cell to the test set
    independently with probability ``q`` (redrawing until the training
    part keeps enough coverage for the largest candidate), fits every
    candidate on the training part only, and accumulates the deviance of
    the held-out cells. The rank with the smallest mean test deviance
    wins; ties go to the smaller rank.
    """
    family = family_from_name(family) if isinstance(family, str) else family
    candidates = _validate_candidates(s, variant, candidates)
    if config is None:
        config = FpcaConfig(k=candidates[0])
    n_repetitions = int(n_repetitions)
    if n_repetitions < 1:
        raise DomainError("n_repetitions must be at least 1")

    need = min_coverage(candidates[-1], variant)
    seeds = [config.seed + r for r in range(n_repetitions)]
    scores = np.empty((n_repetitions, len(candidates)))
    test_sizes = np.empty(n_repetitions, dtype=np.int64)
    for r, split_seed in enumerate(seeds):
        split = random_split(s, q, split_seed, min_train_cover=need)
        test = split.test
        test_sizes[r] = test.n_obs
        for j, k in enumerate(candidates):
            fit = fit_fpca(split.train, variant, family, replace(config, k=k))
            mu = family.clamp_mu(family.inv_link(fit.eta(test.rows, test.cols)))
            scores[r, j] = float(np.sum(family.deviance_term(test.values, mu)))

    means = scores.mean(axis=0)
    table = [(k, float(means[j])) for j, k in enumerate(candidates)]
    chosen = min(table, key=lambda row: (row[1], row[0]))[0]
    return CvResult(
        chosen_k=chosen,
        table=table,
        per_repetition=scores,
        test_sizes=test_sizes,
        q=float(q),
        n_repetitions=n_repetitions,
        split_seeds=seeds,
    )
