"""Tests for orthonormal decomposition, explained deviance and prediction."""

import dataclasses

import numpy as np
import pytest

from flexpca import (
    DomainError,
    FpcaConfig,
    FpcaFit,
    ObservationSet,
    explained_g2,
    fit_fpca,
    orthogonalize,
    predict_cells,
)

from conftest import draw_separated_matrix, planted_gaussian


def manual_fit(alpha, beta, gamma=None, variant="simple", family="gaussian"):
    """Wrap raw factors in a fit object for decomposition tests."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if gamma is None:
        gamma = np.zeros(beta.shape[0])
    return FpcaFit(
        alpha=alpha,
        beta=beta,
        gamma=np.asarray(gamma, dtype=float),
        phi=1.0,
        loglik=0.0,
        deviance=0.0,
        loglik_trace=np.zeros(1),
        start_index=0,
        converged=True,
        k=alpha.shape[1],
        n_rows=alpha.shape[0],
        n_cols=beta.shape[0],
        variant=variant,
        family_name=family,
    )


class TestOrthogonalize:
    def test_rank_one_oracle(self):
        """outer([1,2],[3,4]) has weight 5*sqrt(5) and unit factors
        [1,2]/sqrt(5) and [3,4]/5."""
        dec = orthogonalize(manual_fit([[1.0], [2.0]], [[3.0], [4.0]]))
        assert dec.d == pytest.approx([5.0 * np.sqrt(5.0)], rel=1e-14)
        assert dec.u[:, 0] == pytest.approx(np.array([1.0, 2.0]) / np.sqrt(5.0))
        assert dec.v[:, 0] == pytest.approx(np.array([3.0, 4.0]) / 5.0)

    def test_reconstructs_the_product(self, rng):
        alpha = rng.standard_normal((8, 3))
        beta = rng.standard_normal((6, 3))
        dec = orthogonalize(manual_fit(alpha, beta))
        recon = (dec.u * dec.d) @ dec.v.T
        assert recon == pytest.approx(alpha @ beta.T, abs=1e-12)

    def test_orthonormal_factors_and_ordered_weights(self, rng):
        alpha = rng.standard_normal((10, 4))
        beta = rng.standard_normal((7, 4))
        dec = orthogonalize(manual_fit(alpha, beta))
        assert dec.u.T @ dec.u == pytest.approx(np.eye(4), abs=1e-12)
        assert dec.v.T @ dec.v == pytest.approx(np.eye(4), abs=1e-12)
        assert np.all(dec.d > 0)
        assert np.all(np.diff(dec.d) <= 0)

    def test_sign_convention_anchors_left_vectors(self):
        """The largest-magnitude entry of each left vector is positive."""
        dec = orthogonalize(manual_fit([[-1.0], [-2.0]], [[3.0], [4.0]]))
        assert dec.u[1, 0] > 0
        assert dec.v[:, 0] == pytest.approx(-np.array([3.0, 4.0]) / 5.0)
        recon = (dec.u * dec.d) @ dec.v.T
        assert recon == pytest.approx(np.outer([-1.0, -2.0], [3.0, 4.0]))

    def test_invariant_under_reparameterization(self, rng):
        """alpha A and beta A^-T describe the same structure, so the
        decomposition must not depend on A."""
        alpha = rng.standard_normal((9, 3))
        beta = rng.standard_normal((7, 3))
        a = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
        dec1 = orthogonalize(manual_fit(alpha, beta))
        dec2 = orthogonalize(manual_fit(alpha @ a, beta @ np.linalg.inv(a).T))
        assert dec1.d == pytest.approx(dec2.d, rel=1e-10)
        assert dec1.u == pytest.approx(dec2.u, abs=1e-8)
        assert dec1.v == pytest.approx(dec2.v, abs=1e-8)

    def test_agrees_across_restart_seeds(self, rng):
        """Two fits of the same well separated data differ only by a
        reparameterization, so their decompositions coincide."""
        x = draw_separated_matrix(rng, 15, 10, ks=(2,))
        s = ObservationSet.from_dense(x)
        cfg = dict(tol=1e-15, max_outer_iter=20000, n_starts=2)
        fit_a = fit_fpca(s, "simple", "gaussian", FpcaConfig(k=2, seed=0, **cfg))
        fit_b = fit_fpca(s, "simple", "gaussian", FpcaConfig(k=2, seed=50, **cfg))
        dec_a = orthogonalize(fit_a)
        dec_b = orthogonalize(fit_b)
        assert dec_a.d == pytest.approx(dec_b.d, rel=1e-8)
        assert dec_a.u == pytest.approx(dec_b.u, abs=1e-6)
        assert dec_a.v == pytest.approx(dec_b.v, abs=1e-6)

    def test_redundant_components_are_trimmed(self):
        alpha = np.array([[1.0, 1.0], [2.0, 2.0]])
        beta = np.array([[3.0, 3.0], [4.0, 4.0]])
        dec = orthogonalize(manual_fit(alpha, beta))
        assert dec.d.shape == (1,)
        assert dec.d[0] == pytest.approx(2.0 * 5.0 * np.sqrt(5.0))

    def test_zero_structure_rejected(self):
        with pytest.raises(DomainError, match="null decomposition"):
            orthogonalize(manual_fit(np.zeros((3, 1)), np.zeros((2, 1))))

    def test_metadata_carried_through(self, rng):
        x = planted_gaussian(rng, 8, 6, 1, column_shift=True)
        s = ObservationSet.from_dense(x)
        fit = fit_fpca(s, "covariance", "gaussian", FpcaConfig(k=1, seed=0))
        dec = orthogonalize(fit)
        assert dec.variant == "covariance"
        assert dec.family_name == "gaussian"
        assert np.array_equal(dec.gamma, fit.gamma)


class TestExplainedG2:
    def test_matches_classical_variance_shares(self, rng):
        """On a fully observed, column-centered Gaussian grid the cumulative
        explained deviance of a basic fit equals the classical cumulative
        squared-singular-value ratios."""
        x = draw_separated_matrix(rng, 20, 12, ks=(1, 2, 3))
        x = x - x.mean(axis=0)
        s = ObservationSet.from_dense(x)
        cfg = FpcaConfig(k=3, n_starts=2, seed=0, tol=1e-16, max_outer_iter=30000)
        fit = fit_fpca(s, "simple", "gaussian", cfg)
        dec = orthogonalize(fit)
        res = explained_g2(s, dec)
        sv2 = np.linalg.svd(x, compute_uv=False) ** 2
        classical = np.cumsum(sv2)[:3] / sv2.sum()
        assert res.cumulative[0] == 0.0
        assert res.cumulative[1:] == pytest.approx(classical, abs=1e-6)

    def test_covariance_variant_total_share_is_classical(self, rng):
        """Only the sum of intercepts and rank structure is identifiable,
        so per-component shares of intercept variants can drift from the
        classical ones by the size of the uncentered split, but the
        full-model share matches the centered ratios exactly."""
        x = draw_separated_matrix(rng, 20, 12, ks=(1, 2, 3)) + rng.normal(
            0.5, 1.0, size=12
        )
        s = ObservationSet.from_dense(x)
        cfg = FpcaConfig(k=3, n_starts=2, seed=0, tol=1e-16, max_outer_iter=30000)
        fit = fit_fpca(s, "covariance", "gaussian", cfg)
        res = explained_g2(s, orthogonalize(fit))
        sv2 = np.linalg.svd(x - x.mean(axis=0), compute_uv=False) ** 2
        classical = np.cumsum(sv2)[:3] / sv2.sum()
        assert res.cumulative[-1] == pytest.approx(classical[-1], abs=1e-6)
        assert res.monotone
        assert np.all(res.cumulative >= 0.0)
        assert np.all(res.cumulative <= 1.0)

    def test_shares_accumulate(self, rng):
        x = planted_gaussian(rng, 15, 10, 2, column_shift=True)
        s = ObservationSet.from_dense(x)
        fit = fit_fpca(s, "covariance", "gaussian", FpcaConfig(k=2, seed=0))
        dec = orthogonalize(fit)
        res = explained_g2(s, dec)
        assert res.deviances.shape == (3,)
        assert res.deviances[0] == res.null_deviance
        assert res.increments == pytest.approx(np.diff(res.cumulative))
        assert res.cumulative[-1] == pytest.approx(
            res.increments.sum(), rel=1e-12
        )
        assert res.monotone
        assert np.array_equal(dec.explained, res.increments)

    def test_near_exact_fit_explains_everything(self, rng):
        x = planted_gaussian(rng, 12, 8, 2, noise_sd=0.0, column_shift=True)
        s = ObservationSet.from_dense(x)
        cfg = FpcaConfig(k=2, n_starts=2, seed=0, tol=1e-15, max_outer_iter=10000)
        fit = fit_fpca(s, "covariance", "gaussian", cfg)
        res = explained_g2(s, orthogonalize(fit))
        assert res.cumulative[-1] == pytest.approx(1.0, abs=1e-9)

    def test_poisson_uses_deviance_scale(self, rng):
        x = rng.poisson(np.exp(1.0 + 0.5 * planted_gaussian(rng, 15, 10, 1))).astype(
            float
        )
        s = ObservationSet.from_dense(x)
        fit = fit_fpca(s, "covariance", "poisson", FpcaConfig(k=1, seed=0))
        res = explained_g2(s, orthogonalize(fit))
        assert 0.0 < res.cumulative[-1] <= 1.0
        assert res.null_deviance > 0

    def test_perfect_null_model_rejected(self):
        x = np.full((6, 5), 2.0)
        s = ObservationSet.from_dense(x)
        dec = orthogonalize(manual_fit(np.ones((6, 1)), np.ones((5, 1))))
        with pytest.raises(DomainError, match="null model"):
            explained_g2(s, dec)


class TestPredictCells:
    def test_training_cells_reproduce_fit_deviance(self, rng):
        from flexpca.families import family_from_name

        x = planted_gaussian(rng, 12, 9, 2, column_shift=True)
        s = ObservationSet.from_dense(x)
        fit = fit_fpca(s, "covariance", "gaussian", FpcaConfig(k=2, seed=0))
        family = family_from_name("gaussian")
        pred = predict_cells(fit, (s.rows, s.cols))
        dev = float(
            np.sum(family.deviance_term(s.values, family.clamp_mu(pred.mu)))
        )
        assert dev == pytest.approx(fit.deviance, rel=1e-10)

    def test_zero_score_row_predicts_intercepts_only(self):
        alpha = np.array([[0.0], [2.0]])
        beta = np.array([[3.0], [4.0]])
        fit = manual_fit(alpha, beta)
        pred = predict_cells(fit, (np.array([0, 0]), np.array([0, 1])))
        assert np.array_equal(pred.eta, np.zeros(2))
        assert np.array_equal(pred.mu, np.zeros(2))

    def test_cell_layouts_are_equivalent(self, rng):
        x = planted_gaussian(rng, 10, 7, 1, column_shift=True)
        s = ObservationSet.from_dense(x)
        fit = fit_fpca(s, "covariance", "gaussian", FpcaConfig(k=1, seed=0))
        rows = np.array([0, 3, 9, 4])
        cols = np.array([6, 2, 0, 5])
        pair = predict_cells(fit, (rows, cols))
        stacked = predict_cells(fit, np.column_stack([rows, cols]))
        assert np.array_equal(pair.eta, stacked.eta)
        assert np.array_equal(pair.rows, rows)
        assert np.array_equal(pair.cols, cols)

    def test_poisson_means_exponentiate(self, rng):
        x = rng.poisson(3.0, size=(8, 6)).astype(float)
        s = ObservationSet.from_dense(x)
        fit = fit_fpca(s, "simple", "poisson", FpcaConfig(k=1, seed=0))
        pred = predict_cells(fit, (np.array([1, 2]), np.array([0, 3])))
        assert pred.mu == pytest.approx(np.exp(pred.eta), rel=1e-14)

    def test_family_override(self):
        fit = manual_fit([[1.0]], [[1.0]], family="gaussian")
        pred = predict_cells(fit, (np.array([0]), np.array([0])), family="poisson")
        assert pred.mu == pytest.approx([np.e])

    def test_out_of_range_cells_rejected(self):
        fit = manual_fit([[1.0], [2.0]], [[3.0], [4.0]])
        with pytest.raises(DomainError, match="row index"):
            predict_cells(fit, (np.array([2]), np.array([0])))
        with pytest.raises(DomainError, match="col index"):
            predict_cells(fit, (np.array([0]), np.array([5])))

    def test_malformed_cells_rejected(self):
        fit = manual_fit([[1.0], [2.0]], [[3.0], [4.0]])
        with pytest.raises(DomainError, match="cells"):
            predict_cells(fit, np.zeros((2, 3, 4)))
