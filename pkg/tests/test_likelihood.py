import math

import numpy as np
import pytest
from scipy import stats

from panelclust import (ClusterParams, Hyperparams, PanelData,
                        ValidationError, cluster_suffstats, conditional_loglik,
                        correlation_matrix, draw_beta_sigma2, integrated_loglik)
from panelclust.likelihood import GramCache, gamma_logpdf, nig_logpdf

from conftest import random_panel

LOG_2PI = math.log(2 * math.pi)


def dense_suffstats(data, members, hp, alpha, ell):
    """Naive dense-inverse oracle for the conjugate updates."""
    lam = hp.lambda0.copy()
    rhs = hp.lambda0 @ hp.mu0
    quad = float(hp.mu0 @ hp.lambda0 @ hp.mu0)
    n_total, log_det_sum = 0, 0.0
    for i in members:
        t = data.t[i]
        k = np.exp(-((t[:, None] - t[None, :]) ** 2) / (2 * ell))
        k += alpha * np.eye(len(t))
        kinv = np.linalg.inv(k)
        lam = lam + data.x[i].T @ kinv @ data.x[i]
        rhs = rhs + data.x[i].T @ kinv @ data.y[i]
        quad += float(data.y[i] @ kinv @ data.y[i])
        n_total += len(t)
        log_det_sum += float(np.linalg.slogdet(k)[1])
    mu = np.linalg.solve(lam, rhs)
    a_c = hp.a0 + n_total / 2
    b_c = hp.b0 + 0.5 * (quad - float(mu @ lam @ mu))
    return lam, mu, a_c, b_c, log_det_sum


def dense_loglik(data, i, theta):
    t = data.t[i]
    k = np.exp(-((t[:, None] - t[None, :]) ** 2) / (2 * theta.ell))
    k += theta.alpha * np.eye(len(t))
    cov = theta.sigma2 * k
    return float(stats.multivariate_normal.logpdf(
        data.y[i], mean=data.x[i] @ theta.beta, cov=cov))


class TestCorrelationMatrix:
    def test_diagonal_is_one_plus_alpha(self):
        fac = correlation_matrix(np.array([0.0, 0.3, 2.0]), 0.4, 7.0)
        np.testing.assert_allclose(np.diag(fac.matrix), 1.4)

    def test_offdiagonal_value(self):
        fac = correlation_matrix(np.array([0.0, 2.0]), 0.1, 10.0)
        assert fac.matrix[0, 1] == pytest.approx(0.818731, abs=1e-6)

    def test_large_ell_limit(self):
        fac = correlation_matrix(np.array([0.0, 1.0, 2.0]), 0.1, 1e12)
        np.testing.assert_allclose(
            fac.matrix, np.ones((3, 3)) + 0.1 * np.eye(3), atol=1e-6)

    def test_cholesky_and_logdet(self):
        fac = correlation_matrix(np.array([0.0, 1.0]), 0.5, 1.0)
        np.testing.assert_allclose(fac.chol @ fac.chol.T, fac.matrix)
        assert fac.log_det == pytest.approx(
            float(np.linalg.slogdet(fac.matrix)[1]))

    def test_invalid_params(self):
        with pytest.raises(ValidationError):
            correlation_matrix(np.array([0.0]), -1.0, 1.0)
        with pytest.raises(ValidationError):
            correlation_matrix(np.array([0.0]), 1.0, 0.0)


class TestHyperparams:
    def test_default(self):
        hp = Hyperparams.default(3)
        assert hp.p == 3
        np.testing.assert_allclose(hp.lambda0, 1e-6 * np.eye(3))
        assert (hp.a0, hp.b0, hp.a1, hp.b1, hp.a2, hp.b2) == \
            (0.1, 1.0, 2.0, 1.0, 2.0, 1.0)

    def test_spd_required(self):
        with pytest.raises(ValidationError):
            Hyperparams(np.zeros(2), -np.eye(2))
        with pytest.raises(ValidationError):
            Hyperparams(np.zeros(2), np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_positive_scalars(self):
        with pytest.raises(ValidationError):
            Hyperparams(np.zeros(1), np.eye(1), a0=-1)


class TestClusterSuffstats:
    def scalar_case(self):
        data = PanelData([np.array([2.0])], [np.array([[1.0]])],
                         [np.array([0.0])])
        hp = Hyperparams(np.zeros(1), 1e-6 * np.eye(1), a0=0.1, b0=1.0)
        return data, hp

    def test_scalar_arithmetic(self):
        data, hp = self.scalar_case()
        ss = cluster_suffstats(data, [0], hp, alpha=1.0, ell=1.0)
        lam = 0.5 + 1e-6
        mu = (0.5 * 2.0) / lam
        assert ss.lambda_c[0, 0] == pytest.approx(lam, abs=1e-15)
        assert ss.mu_c[0] == pytest.approx(mu, rel=1e-14)
        assert ss.a_c == pytest.approx(0.6)
        assert ss.b_c == pytest.approx(1 + 0.5 * (2 - mu ** 2 * lam), rel=1e-12)

    def test_prior_only_reduction(self):
        # all-zero covariate columns leave the prior untouched
        hp = Hyperparams(np.array([0.7, -0.2]), np.diag([2.0, 3.0]))
        data = PanelData([np.zeros(3)], [np.zeros((3, 2))],
                         [np.array([0.0, 1.0, 2.0])])
        ss = cluster_suffstats(data, [0], hp, 0.5, 1.0)
        np.testing.assert_allclose(ss.lambda_c, hp.lambda0)
        np.testing.assert_allclose(ss.mu_c, hp.mu0)

    def test_additivity_of_gram_sums(self, rng):
        data = random_panel(4, rng)
        hp = Hyperparams.default(2)
        joint = cluster_suffstats(data, [0, 1, 2, 3], hp, 0.3, 0.9)
        a = cluster_suffstats(data, [0, 1], hp, 0.3, 0.9)
        b = cluster_suffstats(data, [2, 3], hp, 0.3, 0.9)
        np.testing.assert_allclose(
            joint.lambda_c, a.lambda_c + b.lambda_c - hp.lambda0, rtol=1e-12)
        assert joint.n_total == a.n_total + b.n_total
        assert joint.log_det_sum == pytest.approx(
            a.log_det_sum + b.log_det_sum)

    def test_matches_dense_oracle(self, rng):
        # Cholesky pipeline vs naive dense inverses, sizes up to 50
        for n in (3, 17, 50):
            d = PanelData([rng.standard_normal(n)],
                          [rng.standard_normal((n, 2))],
                          [np.sort(rng.uniform(-1, 1, n))])
            hp = Hyperparams(rng.standard_normal(2),
                             np.diag(rng.uniform(0.5, 2.0, 2)))
            ss = cluster_suffstats(d, [0], hp, 0.4, 0.6)
            lam, mu, a_c, b_c, lds = dense_suffstats(d, [0], hp, 0.4, 0.6)
            np.testing.assert_allclose(ss.lambda_c, lam, rtol=1e-8)
            np.testing.assert_allclose(ss.mu_c, mu, rtol=1e-8)
            assert ss.b_c == pytest.approx(b_c, rel=1e-8)
            assert ss.log_det_sum == pytest.approx(lds, rel=1e-8)

    def test_b_c_positive_invariant(self, rng):
        data = random_panel(5, rng, scale=30.0)
        hp = Hyperparams.default(2)
        for _ in range(20):
            al, el = rng.uniform(0.05, 3.0), rng.uniform(0.05, 3.0)
            members = list(rng.choice(5, rng.integers(1, 6), replace=False))
            ss = cluster_suffstats(data, members, hp, al, el)
            assert ss.b_c > 0

    def test_empty_cluster(self, rng):
        data = random_panel(2, rng)
        with pytest.raises(ValidationError, match="empty"):
            cluster_suffstats(data, [], Hyperparams.default(2), 1.0, 1.0)

    def test_condition_warning(self):
        # two identical large columns make the posterior precision singular
        # up to the tiny prior ridge
        data = PanelData([np.array([1.0, 2.0])], [1e4 * np.ones((2, 2))],
                         [np.array([0.0, 1.0])])
        ss = cluster_suffstats(data, [0], Hyperparams.default(2), 1.0, 1.0)
        assert ss.cond_warning is not None


class TestIntegratedLoglik:
    def test_frozen_scalar_value(self):
        data = PanelData([np.array([2.0])], [np.array([[1.0]])],
                         [np.array([0.0])])
        hp = Hyperparams(np.zeros(1), 1e-6 * np.eye(1), a0=0.1, b0=1.0)
        assert integrated_loglik(data, [0], hp, 1.0, 1.0) == pytest.approx(
            -9.681174805847181, abs=1e-10)

    def test_monte_carlo_prior_integration_oracle(self):
        # average the explicit density over a million prior draws
        data = PanelData([np.array([2.0])], [np.array([[1.0]])],
                         [np.array([0.0])])
        hp = Hyperparams(np.zeros(1), 1e-6 * np.eye(1), a0=0.1, b0=1.0)
        exact = math.exp(integrated_loglik(data, [0], hp, 1.0, 1.0))
        rng = np.random.default_rng(4242)
        n = 10 ** 6
        sigma2 = 1.0 / rng.gamma(hp.a0, 1.0 / hp.b0, size=n)
        beta = rng.standard_normal(n) * np.sqrt(sigma2 * 1e6)
        dens = np.exp(-0.5 * np.log(2 * np.pi * 2 * sigma2)
                      - (2.0 - beta) ** 2 / (2 * 2 * sigma2))
        se = dens.std(ddof=1) / math.sqrt(n)
        assert abs(dens.mean() - exact) < 3 * se

    def test_member_multiset_is_a_set(self, rng):
        data = random_panel(3, rng)
        hp = Hyperparams.default(2)
        assert integrated_loglik(data, [1, 1, 2], hp, 0.5, 0.5) == \
            integrated_loglik(data, [1, 2], hp, 0.5, 0.5)

    def test_member_order_irrelevant(self, rng):
        data = random_panel(4, rng)
        hp = Hyperparams.default(2)
        assert integrated_loglik(data, [3, 0, 2], hp, 0.5, 0.5) == \
            integrated_loglik(data, [0, 2, 3], hp, 0.5, 0.5)

    def test_singleton_factorization(self, rng):
        data = random_panel(2, rng)
        hp = Hyperparams.default(2)
        both = sum(integrated_loglik(data, [i], hp, 0.7, 0.4) for i in (0, 1))
        assert np.isfinite(both)

    def test_conjugacy_identity(self, rng):
        # integrated + posterior density == prior density + conditional sum
        for _ in range(10):
            p = int(rng.integers(1, 4))
            data = random_panel(3, rng, p=p)
            a = rng.standard_normal((p, p))
            hp = Hyperparams(rng.standard_normal(p), a @ a.T + p * np.eye(p),
                             a0=rng.uniform(0.2, 3), b0=rng.uniform(0.2, 3))
            al, el = rng.uniform(0.1, 2), rng.uniform(0.1, 2)
            members = [0, 1, 2]
            ss = cluster_suffstats(data, members, hp, al, el)
            beta = rng.standard_normal(p)
            sigma2 = rng.uniform(0.3, 4.0)
            theta = ClusterParams(beta, sigma2, al, el)
            lhs = (integrated_loglik(data, members, hp, al, el)
                   + nig_logpdf(beta, sigma2, ss.mu_c, ss.lambda_c,
                                ss.a_c, ss.b_c))
            rhs = (nig_logpdf(beta, sigma2, hp.mu0, hp.lambda0, hp.a0, hp.b0)
                   + sum(conditional_loglik(data, i, theta) for i in members))
            assert abs(lhs - rhs) < 1e-8


class TestConditionalLoglik:
    def test_scalar_case(self):
        mu = 3.7
        data = PanelData([np.array([mu])], [np.array([[1.0]])],
                         [np.array([0.0])])
        theta = ClusterParams(np.array([mu]), 1.0, 1.0, 1.0)
        assert conditional_loglik(data, 0, theta) == pytest.approx(
            -0.5 * math.log(2 * math.pi * 2.0))

    def test_matches_dense_oracle_and_sigma2_scaling(self, rng):
        data = random_panel(2, rng, n_lo=4, n_hi=6)
        theta = ClusterParams(rng.standard_normal(2), 1.3, 0.2, 2.0)
        scaled = ClusterParams(theta.beta, 4 * 1.3, 0.2, 2.0)
        for i in (0, 1):
            assert conditional_loglik(data, i, theta) == pytest.approx(
                dense_loglik(data, i, theta), abs=1e-8)
            assert conditional_loglik(data, i, scaled) == pytest.approx(
                dense_loglik(data, i, scaled), abs=1e-8)

    def test_row_order_invariance_via_ingestion(self, tmp_path, rng):
        # the joint Gaussian is invariant to jointly permuting (y, x, t) rows;
        # ingestion sorts rows, so shuffled files give identical values
        rows = [f"A,{t},{y},{x}" for t, y, x in
                zip([0.0, 0.4, 0.9], rng.standard_normal(3),
                    rng.standard_normal(3))]
        header = "location_id,time,y,x1"
        f1 = tmp_path / "a.csv"
        f1.write_text("\n".join([header] + rows) + "\n")
        f2 = tmp_path / "b.csv"
        f2.write_text("\n".join([header] + rows[::-1]) + "\n")
        from panelclust import load_panel_csv
        theta = ClusterParams(np.array([0.3]), 1.0, 0.5, 1.0)
        v1 = conditional_loglik(load_panel_csv(f1), 0, theta)
        v2 = conditional_loglik(load_panel_csv(f2), 0, theta)
        assert v1 == v2


class TestDrawBetaSigma2:
    def test_degenerate_prior_pins_draws(self, rng):
        # huge a0 with b0 = a0 * s and huge lambda0 pin (beta, sigma2)
        s = 0.25
        hp = Hyperparams(np.array([1.5]), 1e12 * np.eye(1),
                         a0=1e9, b0=1e9 * s)
        data = PanelData([np.array([0.0])], [np.array([[1.0]])],
                         [np.array([0.0])])
        ss = cluster_suffstats(data, [0], hp, 1.0, 1.0)
        gen = np.random.default_rng(5)
        for _ in range(20):
            beta, sigma2 = draw_beta_sigma2(ss, gen)
            assert beta[0] == pytest.approx(1.5, abs=1e-3)
            assert sigma2 == pytest.approx(s, rel=1e-3)

    def test_moment_oracles(self, rng):
        data = random_panel(2, rng, n_lo=3, n_hi=4)
        hp = Hyperparams.default(2, a0=2.0, b0=1.0)
        ss = cluster_suffstats(data, [0, 1], hp, 0.5, 0.5)
        gen = np.random.default_rng(99)
        n = 10 ** 5
        betas = np.empty((n, 2))
        precs = np.empty(n)
        for k in range(n):
            b, s2 = draw_beta_sigma2(ss, gen)
            betas[k] = b
            precs[k] = 1.0 / s2
        # E[beta] = mu_c, E[1/sigma2] = a_c / b_c
        se_prec = precs.std(ddof=1) / math.sqrt(n)
        assert abs(precs.mean() - ss.a_c / ss.b_c) < 4 * se_prec
        for j in range(2):
            se = betas[:, j].std(ddof=1) / math.sqrt(n)
            assert abs(betas[:, j].mean() - ss.mu_c[j]) < 4 * se

    def test_deterministic_given_stream(self, rng):
        data = random_panel(1, rng)
        ss = cluster_suffstats(data, [0], Hyperparams.default(2), 1.0, 1.0)
        a = draw_beta_sigma2(ss, np.random.default_rng(3))
        b = draw_beta_sigma2(ss, np.random.default_rng(3))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]


class TestDensities:
    def test_gamma_logpdf_matches_scipy(self, rng):
        for _ in range(10):
            x, a, b = rng.uniform(0.01, 5, 3)
            assert gamma_logpdf(x, a, b) == pytest.approx(
                stats.gamma.logpdf(x, a, scale=1 / b))
        assert gamma_logpdf(-1.0, 2.0, 1.0) == -np.inf

    def test_nig_logpdf_matches_scipy_composition(self, rng):
        for _ in range(10):
            p = int(rng.integers(1, 4))
            a_mat = rng.standard_normal((p, p))
            lam = a_mat @ a_mat.T + p * np.eye(p)
            mu = rng.standard_normal(p)
            a, b = rng.uniform(0.5, 3, 2)
            beta = rng.standard_normal(p)
            sigma2 = rng.uniform(0.2, 3)
            expected = (stats.invgamma.logpdf(sigma2, a, scale=b)
                        + stats.multivariate_normal.logpdf(
                            beta, mean=mu, cov=sigma2 * np.linalg.inv(lam)))
            assert nig_logpdf(beta, sigma2, mu, lam, a, b) == pytest.approx(
                expected, abs=1e-9)


class TestGramCache:
    def test_identical_keys_identical_factors(self, rng):
        data = random_panel(3, rng)
        cache = GramCache(data)
        a1 = cache.kernel(0, 0.5, 1.0)
        a2 = cache.kernel(0, 0.5, 1.0)
        assert a1[0] is a2[0]

    def test_shared_grids_share_factorizations(self):
        t = np.array([0.0, 1.0, 2.0])
        data = PanelData([np.zeros(3), np.ones(3)],
                         [np.ones((3, 1)), np.ones((3, 1))],
                         [t, t.copy()])
        cache = GramCache(data)
        assert cache.kernel(0, 0.3, 1.0)[0] is cache.kernel(1, 0.3, 1.0)[0]

    def test_tensor_path_equals_single_path(self, rng):
        # same grams whether computed per-location or via the stacked solve
        t = np.sort(rng.uniform(-1, 1, 6))
        data = PanelData([rng.standard_normal(6) for _ in range(3)],
                         [rng.standard_normal((6, 2)) for _ in range(3)],
                         [t.copy() for _ in range(3)])
        single = GramCache(data)
        g1 = single.gram(1, 0.4, 0.8)
        stacked = GramCache(data)
        stacked.gram_tensor(0, 0.4, 0.8)
        g2 = stacked.gram(1, 0.4, 0.8)
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
