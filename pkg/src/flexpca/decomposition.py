"""Orthonormal components, explained deviance, and cell prediction.

A fitted model parameterizes the rank-k part of the linear predictor as
``alpha @ beta.T``, which is only identified up to an invertible k x k
transform. :func:`orthogonalize` maps it to the unique (up to sign)
singular form ``u @ diag(d) @ v.T`` with orthonormal columns and
decreasing weights, fixing signs so the largest-magnitude entry of each
left vector is positive.

:func:`explained_g2` quantifies how much of the data's deviance each
leading component accounts for, relative to a null model with no
multiplicative structure. :func:`predict_cells` evaluates the fitted
model at arbitrary cells, observed or not.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .families import family_from_name
from .fitting import variant_has_gamma
from .glm import GroupIndex, fit_glm_grouped

__all__ = [
    "Decomposition",
    "ExplainedG2",
    "PredictionSet",
    "orthogonalize",
    "explained_g2",
    "predict_cells",
]

# Components whose weight falls below this fraction of the largest are
# numerically zero and dropped.
RANK_TOLERANCE = 1e-12


@dataclass
class Decomposition:
    """Singular form of a fitted rank-k structure.

    ``u`` is (n_rows, r) with orthonormal columns, ``v`` is (n_cols, r)
    with orthonormal columns, ``d`` is the decreasing positive weight
    vector, and ``gamma`` carries the column intercepts of the fit (all
    zeros for the simple variant). ``explained`` is filled by
    :func:`explained_g2` when requested.
    """

    u: np.ndarray
    d: np.ndarray
    v: np.ndarray
    gamma: np.ndarray
    variant: str
    family_name: str
    explained: np.ndarray | None = None


@dataclass
class ExplainedG2:
    """Deviance explained by nested truncations of the decomposition.

    ``deviances[m]`` is the total deviance using the leading ``m``
    components (plus intercepts) for m = 1 .. r, and ``deviances[0]`` is
    ``null_deviance``, the deviance of a refitted intercepts-only model,
    so that ``cumulative[0]`` is zero by definition. ``cumulative[m] = 1
    - deviances[m] / null_deviance`` and ``increments[m-1]`` is the
    share added by component m. ``monotone`` flags whether the deviances
    were non-increasing; a reversal can occur because truncations are
    not themselves maximum likelihood fits.
    """

    null_deviance: float
    deviances: np.ndarray
    cumulative: np.ndarray
    increments: np.ndarray
    monotone: bool


@dataclass
class PredictionSet:
    """Predicted linear predictors and means at explicit cells."""

    rows: np.ndarray
    cols: np.ndarray
    eta: np.ndarray
    mu: np.ndarray


def orthogonalize(fit):
    """Rotate a fit into orthonormal components with decreasing weights.

    Computes the compact singular value decomposition of ``alpha @
    beta.T`` without forming it, via QR factors of the two sides.
    Components with weight below ``1e-12`` of the largest are dropped;
    if everything is zero the decomposition is undefined.

    The result is invariant (up to the resolved signs) under any
    invertible reparameterization ``alpha A, beta A^-T`` of the fit.
    """
    alpha = np.asarray(fit.alpha, dtype=float)
    beta = np.asarray(fit.beta, dtype=float)
    qa, ra = np.linalg.qr(alpha)
    qb, rb = np.linalg.qr(beta)
    us, d, vst = np.linalg.svd(ra @ rb.T)
    if d.size == 0 or d[0] <= 0.0:
        raise DomainError(
            "null decomposition: the fitted rank structure is identically zero"
        )
    keep = d >= RANK_TOLERANCE * d[0]
    u = qa @ us[:, keep]
    v = qb @ vst.T[:, keep]
    d = d[keep]

    # Sign convention: the largest-magnitude entry of each left vector is
    # positive; ties resolve to the lowest row index via argmax.
    for r in range(d.size):
        anchor = np.argmax(np.abs(u[:, r]))
        if u[anchor, r] < 0:
            u[:, r] = -u[:, r]
            v[:, r] = -v[:, r]

    return Decomposition(
        u=u,
        d=d,
        v=v,
        gamma=None if fit.gamma is None else np.asarray(fit.gamma, dtype=float),
        variant=fit.variant,
        family_name=fit.family_name,
    )


def _null_deviance(s, variant, family):
    """Deviance of a freshly fitted intercepts-only model."""
    if variant_has_gamma(variant):
        gi = GroupIndex(s.cols, s.n_cols)
        coef, _, _, _ = fit_glm_grouped(
            s.values[gi.order],
            np.empty((s.n_obs, 0)),
            gi,
            family,
            include_intercept=True,
            kind="column",
        )
        eta = coef[s.cols, 0]
    else:
        gi = GroupIndex(np.zeros(s.n_obs, dtype=np.int64), 1)
        coef, _, _, _ = fit_glm_grouped(
            s.values[gi.order],
            np.empty((s.n_obs, 0)),
            gi,
            family,
            include_intercept=True,
            kind="grand mean",
        )
        eta = np.full(s.n_obs, coef[0, 0])
    mu = family.clamp_mu(family.inv_link(eta))
    return float(np.sum(family.deviance_term(s.values, mu)))


def explained_g2(s, decomp, family=None):
    """Share of deviance explained by each leading component.

    Parameters
    ----------
    s : ObservationSet
        The cells to evaluate on, normally the fitting data.
    decomp : Decomposition
    family : Family or str, optional
        Defaults to the family recorded in the decomposition.

    Returns
    -------
    ExplainedG2
    """
    if family is None:
        family = decomp.family_name
    family = family_from_name(family) if isinstance(family, str) else family
    d0 = _null_deviance(s, decomp.variant, family)
    if d0 <= 0:
        raise DomainError("null model already fits perfectly; nothing to explain")

    base = decomp.gamma[s.cols] if decomp.gamma is not None else 0.0
    r = decomp.d.size
    # Entry m uses the leading m components; the m = 0 entry is the null
    # model itself, so its explained fraction is zero by definition.
    deviances = np.empty(r + 1)
    deviances[0] = d0
    scores = decomp.u[s.rows] * decomp.d
    loads = decomp.v[s.cols]
    for m in range(1, r + 1):
        eta = base + np.einsum("ij,ij->i", scores[:, :m], loads[:, :m])
        mu = family.clamp_mu(family.inv_link(eta))
        deviances[m] = float(np.sum(family.deviance_term(s.values, mu)))
    cumulative = 1.0 - deviances / d0
    increments = np.diff(cumulative)
    monotone = bool(np.all(np.diff(deviances) <= 1e-9 * (1.0 + deviances[:-1])))
    decomp.explained = increments
    return ExplainedG2(
        null_deviance=d0,
        deviances=deviances,
        cumulative=cumulative,
        increments=increments,
        monotone=monotone,
    )


def predict_cells(fit, cells, family=None):
    """Evaluate the fitted model at explicit cells.

    Parameters
    ----------
    fit : FpcaFit
    cells : pair of arrays or (m, 2) array
        Row and column indices of the cells to predict.
    family : Family or str, optional
        Defaults to the family recorded in the fit.

    Returns
    -------
    PredictionSet
        Linear predictors and means per cell.
    """
    if family is None:
        family = fit.family_name
    family = family_from_name(family) if isinstance(family, str) else family
    cells = np.asarray(cells)
    if cells.ndim == 2 and cells.shape[1] == 2:
        rows, cols = cells[:, 0], cells[:, 1]
    elif cells.ndim == 2 and cells.shape[0] == 2:
        rows, cols = cells[0], cells[1]
    else:
        raise DomainError("cells must be an (m, 2) array or a (rows, cols) pair")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= fit.n_rows):
        raise DomainError(f"cell row index out of range [0, {fit.n_rows})")
    if cols.size and (cols.min() < 0 or cols.max() >= fit.n_cols):
        raise DomainError(f"cell col index out of range [0, {fit.n_cols})")
    eta = fit.eta(rows, cols)
    return PredictionSet(rows=rows, cols=cols, eta=eta, mu=family.inv_link(eta))
