"""Shared fixtures and small numerical helpers for the test suite."""

import numpy as np
import pytest

from flexpca import ObservationSet


def truncated_svd(x, k):
    """Best rank-k approximation of a dense matrix in Frobenius norm."""
    u, d, vt = np.linalg.svd(x, full_matrices=False)
    return (u[:, :k] * d[:k]) @ vt[:k]


def centered_pca(x, k):
    """Column-centered rank-k reconstruction: mean + truncated SVD."""
    m = x.mean(axis=0)
    return m + truncated_svd(x - m, k)


def correlation_pca(x, k):
    """Rank-k reconstruction after standardizing each column.

    Columns are centered and scaled by their maximum-likelihood standard
    deviations, reduced by truncated SVD, then mapped back to the
    original scale.
    """
    m = x.mean(axis=0)
    sd = np.sqrt(((x - m) ** 2).mean(axis=0))
    z = (x - m) / sd
    return m + truncated_svd(z, k) * sd


def relative_gap(d, k):
    """Relative separation between singular values k and k+1 (1-based)."""
    if k >= d.size:
        return np.inf
    if d[k - 1] <= 0:
        return 0.0
    return (d[k - 1] - d[k]) / d[k - 1]


def draw_separated_matrix(rng, n, p, ks, min_gap=0.02):
    """Draw a standard normal matrix whose spectrum is identifiable.

    Rank selection by alternating fits is only well posed when the
    singular values around each truncated rank are separated, so draws
    are rejected until both the raw and the column-centered spectra
    have a relative gap of at least ``min_gap`` at every rank in ``ks``.
    """
    while True:
        x = rng.standard_normal((n, p))
        d_raw = np.linalg.svd(x, compute_uv=False)
        d_cen = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
        if all(relative_gap(d_raw, k) >= min_gap for k in ks) and all(
            relative_gap(d_cen, k) >= min_gap for k in ks
        ):
            return x


def planted_gaussian(rng, n, p, k, noise_sd=0.1, column_shift=False):
    """Low-rank Gaussian matrix with optional per-column offsets."""
    alpha = rng.standard_normal((n, k))
    beta = rng.standard_normal((p, k))
    x = alpha @ beta.T + noise_sd * rng.standard_normal((n, p))
    if column_shift:
        x = x + rng.normal(0.5, 2.0, size=p)
    return x


def transversal_mask(rng, n):
    """Boolean n-by-n mask hiding one random cell per row and column."""
    mask = np.ones((n, n), dtype=bool)
    mask[np.arange(n), rng.permutation(n)] = False
    return mask


def dense_to_set(x, mask=None):
    """Wrap a dense matrix (optionally masked) as an observation set."""
    if mask is None:
        return ObservationSet.from_dense(x)
    r, c = np.nonzero(mask)
    return ObservationSet(x.shape[0], x.shape[1], r, c, x[r, c])


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
