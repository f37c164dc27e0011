import numpy as np
import pytest
from scipy import stats

from spikedcov.prior import MsslHyper, double_gamma_logpdf, sample_lambda0, sample_rows
from spikedcov.sampler import (
    ChainState,
    McmcConfig,
    factor_conditional,
    inclusion_posterior,
    indicator_probabilities,
    initial_state,
    loadings_log_likelihood_terms,
    noise_variance_posterior,
    row_log_priors,
    run_chain,
    spike_rate_log_target,
    update_factors,
    update_loadings,
    update_spike_rate,
)


def make_state(p, r, n, rng, sigma2=1.0, lambda0=5.0, theta=0.3):
    B = rng.standard_normal((p, r))
    xi = rng.uniform(size=p) < 0.5
    Z = rng.standard_normal((n, r))
    return ChainState(B=B, xi=xi, Z=Z, theta=theta, lambda0=lambda0, sigma2=sigma2)


class TestFactorUpdate:
    def test_zero_loadings_restore_standard_normal_prior(self):
        rng = np.random.default_rng(0)
        state = make_state(3, 2, 20_000, rng)
        state.B = np.zeros((3, 2))
        Y = rng.standard_normal((20_000, 3))
        Z = update_factors(state, Y, rng)
        assert stats.kstest(Z.ravel(), "norm").pvalue > 0.01

    def test_small_noise_mean_approaches_least_squares(self):
        rng = np.random.default_rng(1)
        B = rng.standard_normal((6, 2))
        y = rng.standard_normal(6)
        mean, _ = factor_conditional(B, 1e-12, y)
        ls = np.linalg.lstsq(B, y, rcond=None)[0]
        assert np.abs(mean - ls).max() < 1e-8

    def test_conditional_mean_matches_dense_solve(self):
        rng = np.random.default_rng(2)
        n, p, r = 4, 3, 1
        state = make_state(p, r, n, rng, sigma2=0.7)
        Y = rng.standard_normal((n, p))
        for i in range(n):
            mean, cov = factor_conditional(state.B, state.sigma2, Y[i])
            A = state.B.T @ state.B + state.sigma2 * np.eye(r)
            oracle_mean = np.linalg.solve(A, state.B.T @ Y[i])
            oracle_cov = state.sigma2 * np.linalg.solve(A, np.eye(r))
            assert np.abs(mean - oracle_mean).max() < 1e-12
            assert np.abs(cov - oracle_cov).max() < 1e-12

    def test_update_is_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        state = make_state(4, 2, 10, rng)
        Y = rng.standard_normal((10, 4))
        z1 = update_factors(state, Y, np.random.default_rng(42))
        z2 = update_factors(state, Y, np.random.default_rng(42))
        assert np.array_equal(z1, z2)


class TestNoiseVarianceUpdate:
    def test_empty_data_reduces_to_prior(self):
        hyper = MsslHyper(a_sigma=3.0, b_sigma=2.0, p=4, r=1)
        shape, rate = noise_variance_posterior(
            np.zeros((0, 4)), np.zeros((0, 1)), np.zeros((4, 1)), hyper)
        assert shape == pytest.approx(3.0)
        assert rate == pytest.approx(2.0)

    def test_zero_residuals(self):
        rng = np.random.default_rng(4)
        hyper = MsslHyper(a_sigma=2.0, b_sigma=1.5, p=3, r=1)
        Z = rng.standard_normal((5, 1))
        B = rng.standard_normal((3, 1))
        Y = Z @ B.T
        shape, rate = noise_variance_posterior(Y, Z, B, hyper)
        assert shape == pytest.approx(2.0 + 5 * 3 / 2)
        assert rate == pytest.approx(1.5)

    def test_conjugate_algebra_exact_on_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n, p, r = (int(rng.integers(1, 8)) for _ in range(3))
            hyper = MsslHyper(a_sigma=1.0 + rng.uniform(0, 3), b_sigma=1.0 + rng.uniform(0, 3),
                              p=p, r=min(r, p))
            Y = rng.standard_normal((n, p))
            Z = rng.standard_normal((n, min(r, p)))
            B = rng.standard_normal((p, min(r, p)))
            shape, rate = noise_variance_posterior(Y, Z, B, hyper)
            assert shape == 1.0 * hyper.a_sigma + 0.5 * n * p
            assert abs(rate - (hyper.b_sigma + 0.5 * np.sum((Y - Z @ B.T) ** 2))) < 1e-12

    def test_moment_oracle(self):
        # 1e5 draws at a fixed residual sum: empirical mean vs rate/(shape-1)
        rng = np.random.default_rng(6)
        shape, rate = 51.0, 40.0
        draws = 1.0 / rng.gamma(shape, 1.0 / rate, size=100_000)
        assert np.mean(draws) == pytest.approx(rate / (shape - 1.0), rel=0.01)


class TestInclusionProbabilityUpdate:
    def test_all_spike(self):
        hyper = MsslHyper(p=7, r=1, kappa=0.5)
        a, b = inclusion_posterior(np.zeros(7, dtype=bool), hyper)
        assert a == pytest.approx(1.0)
        assert b == pytest.approx(7.0 ** 1.5 + 7.0)

    def test_all_slab(self):
        hyper = MsslHyper(p=7, r=1, kappa=0.5)
        a, b = inclusion_posterior(np.ones(7, dtype=bool), hyper)
        assert a == pytest.approx(8.0)
        assert b == pytest.approx(7.0 ** 1.5)

    def test_beta_moment_oracle(self):
        rng = np.random.default_rng(7)
        a, b = 4.0, 11.0
        draws = rng.beta(a, b, size=100_000)
        assert np.mean(draws) == pytest.approx(a / (a + b), rel=0.01)


class TestIndicatorUpdate:
    def test_theta_one_selects_all_slab(self):
        rng = np.random.default_rng(8)
        B = rng.standard_normal((10, 2))
        probs = indicator_probabilities(B, 1.0, 1.0, 5.0)
        assert np.all(probs == 1.0)

    def test_equal_densities_give_half(self):
        # scalar case: slab and spike densities cross at
        # b* = log((lam + lam0)/lam)/lam0; with theta = 1/2 the posterior
        # inclusion probability is exactly 1/2 there
        lam, lam0 = 1.0, 9.0
        b_star = np.log((lam + lam0) / lam) / lam0
        probs = indicator_probabilities(np.array([[b_star]]), 0.5, lam, lam0)
        assert abs(probs[0] - 0.5) < 1e-12

    def test_scalar_density_ratio_oracle(self):
        lam, lam0, b, theta = 1.0, 9.0, 0.5, 0.5
        slab = (lam / 2.0) * np.exp(-lam * b)
        spike = ((lam + lam0) / 2.0) * np.exp(-(lam + lam0) * b)
        oracle = theta * slab / (theta * slab + (1 - theta) * spike)
        probs = indicator_probabilities(np.array([[b]]), theta, lam, lam0)
        assert abs(probs[0] - oracle) < 1e-12

    def test_extreme_rates_stay_finite(self):
        rng = np.random.default_rng(9)
        B = rng.standard_normal((5, 3))
        probs = indicator_probabilities(B, 1e-8, 1.0, 1e12)
        assert np.all((probs >= 0) & (probs <= 1))


class TestSpikeRateUpdate:
    def test_zero_proposal_scale_keeps_value(self):
        rng = np.random.default_rng(10)
        state = make_state(4, 1, 5, rng, lambda0=3.7)
        hyper = MsslHyper(p=4, r=1)
        new, accepted = update_spike_rate(state, hyper, -np.inf, rng)
        assert new == 3.7 and accepted

    def test_detailed_balance_identity(self):
        # min(1, R) pi(x) q(y|x) == min(1, 1/R) pi(y) q(x|y) for the
        # log-normal random walk, on fixed state pairs
        rng = np.random.default_rng(11)
        hyper = MsslHyper(p=5, r=2)
        state = make_state(5, 2, 6, rng)
        sd = 0.8
        for lam0_x, lam0_y in [(0.5, 2.0), (3.0, 3.5), (10.0, 0.2)]:
            log_pi_x = spike_rate_log_target(lam0_x, state.B, state.xi, hyper)
            log_pi_y = spike_rate_log_target(lam0_y, state.B, state.xi, hyper)
            # log-normal transition densities
            def log_q(a, b):
                z = (np.log(b) - np.log(a)) / sd
                return -0.5 * z**2 - np.log(b * sd * np.sqrt(2 * np.pi))
            log_r = log_pi_y + log_q(lam0_y, lam0_x) - log_pi_x - log_q(lam0_x, lam0_y)
            lhs = min(0.0, log_r) + log_pi_x + log_q(lam0_x, lam0_y)
            rhs = min(0.0, -log_r) + log_pi_y + log_q(lam0_y, lam0_x)
            assert abs(lhs - rhs) < 1e-12

    def test_jacobian_matches_transition_density_ratio(self):
        # the implementation's acceptance uses log(prop/current) as the
        # proposal correction; verify it equals log q(x|y) - log q(y|x)
        sd = 1.3
        for x, y in [(0.7, 2.2), (5.0, 0.9)]:
            z = (np.log(y) - np.log(x)) / sd
            log_q_xy = -0.5 * z**2 - np.log(y * sd * np.sqrt(2 * np.pi))
            log_q_yx = -0.5 * z**2 - np.log(x * sd * np.sqrt(2 * np.pi))
            assert abs((log_q_yx - log_q_xy) - (np.log(y) - np.log(x))) < 1e-12

    def test_prior_restoration_all_slab(self):
        # with no spike rows the target is the truncated hyperprior; the
        # chain marginal must match direct draws (KS, level 0.01)
        hyper = MsslHyper(p=1, r=1)
        rng = np.random.default_rng(12)
        state = make_state(1, 1, 3, rng)
        state.xi = np.ones(1, dtype=bool)
        chain = []
        log_sd = np.log(2.0)
        for it in range(40_000):
            lam0, _ = update_spike_rate(state, hyper, log_sd, rng)
            state.lambda0 = lam0
            if it >= 1000 and it % 20 == 0:
                chain.append(lam0)
        direct = sample_lambda0(hyper, rng, size=len(chain))
        stat = stats.ks_2samp(np.log(chain), np.log(direct))
        assert stat.pvalue > 0.01


class TestLoadingsUpdate:
    def test_zero_proposal_scale_keeps_rows_and_accepts(self):
        rng = np.random.default_rng(13)
        state = make_state(6, 2, 8, rng)
        Y = rng.standard_normal((8, 6))
        hyper = MsslHyper(p=6, r=2)
        B_new, accepted = update_loadings(state, Y, hyper, np.full(6, -np.inf), rng)
        assert np.array_equal(B_new, state.B)
        assert accepted.all()

    def test_likelihood_term_touches_only_own_column(self):
        # the per-row likelihood depends on Y only through Z'Y[:, j]
        rng = np.random.default_rng(14)
        n, p, r = 9, 5, 2
        Z = rng.standard_normal((n, r))
        Y1 = rng.standard_normal((n, p))
        Y2 = Y1.copy()
        Y2[:, [0, 1, 3, 4]] += rng.standard_normal((n, 4))  # leave column 2 alone
        B = rng.standard_normal((p, r))
        gram = Z.T @ Z
        t1 = loadings_log_likelihood_terms(B, gram, Z.T @ Y1, 0.8)
        t2 = loadings_log_likelihood_terms(B, gram, Z.T @ Y2, 0.8)
        assert t1[2] == t2[2]

    def test_flat_likelihood_preserves_slab_prior(self):
        # rows started at prior draws and pushed through MH sweeps with a
        # flat likelihood must stay prior distributed (KS, level 0.01)
        lam, lam0 = 1.0, 6.0
        p, r = 4000, 1
        rng = np.random.default_rng(15)
        xi = np.ones(p, dtype=bool)
        B = sample_rows(xi, lam, lam0, r, rng)
        state = ChainState(B=B, xi=xi, Z=np.zeros((1, r)), theta=0.5,
                           lambda0=lam0, sigma2=1.0)
        Y = np.zeros((1, p))
        hyper = MsslHyper(lam=lam, p=p, r=r)
        log_sd = np.full(p, np.log(1.5))
        for _ in range(60):
            state.B, _ = update_loadings(state, Y, hyper, log_sd, rng)
        stat = stats.kstest(np.abs(state.B[:, 0]), "expon", args=(0.0, 1.0 / lam))
        assert stat.pvalue > 0.01
        # signs stay symmetric
        assert abs(np.mean(state.B > 0) - 0.5) < 0.03

    def test_flat_likelihood_preserves_spike_prior(self):
        lam, lam0, r = 1.0, 9.0, 2
        p = 4000
        rng = np.random.default_rng(16)
        xi = np.zeros(p, dtype=bool)
        B = sample_rows(xi, lam, lam0, r, rng)
        state = ChainState(B=B, xi=xi, Z=np.zeros((1, r)), theta=0.5,
                           lambda0=lam0, sigma2=1.0)
        Y = np.zeros((1, p))
        hyper = MsslHyper(lam=lam, p=p, r=r)
        log_sd = np.full(p, np.log(0.3))
        for _ in range(60):
            state.B, _ = update_loadings(state, Y, hyper, log_sd, rng)
        # row l1 norms are Exp(lam + lam0) under the spike
        stat = stats.kstest(np.abs(state.B).sum(axis=1), "expon",
                            args=(0.0, 1.0 / (lam + lam0)))
        assert stat.pvalue > 0.01

    def test_one_dimensional_grid_quadrature_oracle(self):
        # p = r = 1, slab row: the exact conditional has density
        # prop. to exp(-||y - z b||^2 / (2 s2)) * psi_1(b | lam); compare the
        # long-run chain marginal against its quadrature CDF
        rng = np.random.default_rng(17)
        n, lam, sigma2 = 20, 1.0, 1.0
        Z = rng.standard_normal((n, 1))
        b_true = 0.8
        Y = b_true * Z + np.sqrt(sigma2) * rng.standard_normal((n, 1))
        hyper = MsslHyper(lam=lam, p=1, r=1)
        state = ChainState(B=np.array([[0.0]]), xi=np.ones(1, dtype=bool),
                           Z=Z, theta=0.5, lambda0=5.0, sigma2=sigma2)
        draws = []
        log_sd = np.full(1, np.log(0.6))
        for it in range(60_000):
            state.B, _ = update_loadings(state, Y, hyper, log_sd, rng)
            if it % 20 == 0:
                draws.append(state.B[0, 0])
        grid = np.linspace(-3.0, 4.0, 20001)
        log_dens = (-np.sum((Y - grid[None, :] * Z) ** 2, axis=0) / (2 * sigma2)
                    - lam * np.abs(grid))
        dens = np.exp(log_dens - log_dens.max())
        cdf = np.cumsum(dens)
        cdf /= cdf[-1]
        stat = stats.kstest(np.asarray(draws), lambda x: np.interp(x, grid, cdf))
        assert stat.pvalue > 0.01


class TestRowLogPriors:
    def test_matches_scalar_routine(self):
        rng = np.random.default_rng(18)
        B = rng.standard_normal((6, 3))
        xi = np.array([1, 0, 1, 0, 0, 1], dtype=bool)
        vals = row_log_priors(B, xi, 1.2, 4.0)
        for j in range(6):
            shape = 1.0 if xi[j] else 1.0 / 3
            rate = 1.2 if xi[j] else 5.2
            assert vals[j] == pytest.approx(
                float(np.sum(double_gamma_logpdf(B[j], shape, rate))), abs=1e-12)


class TestRunChain:
    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(19)
        Y = rng.standard_normal((30, 10))
        hyper = MsslHyper(p=10, r=2)
        cfg = McmcConfig(n_burnin=50, n_samples=50, seed=123)
        s1 = run_chain(Y, 2, hyper, cfg)
        s2 = run_chain(Y, 2, hyper, cfg)
        assert np.array_equal(s1.b_draws, s2.b_draws)
        assert np.array_equal(s1.sigma2_draws, s2.sigma2_draws)
        assert np.array_equal(s1.xi_draws, s2.xi_draws)
        assert np.array_equal(s1.log_post, s2.log_post)

    def test_rejects_non_finite_data(self):
        Y = np.ones((5, 3))
        Y[2, 1] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            run_chain(Y, 1, MsslHyper(p=3, r=1), McmcConfig(n_burnin=1, n_samples=1))

    def test_positivity_throughout(self):
        rng = np.random.default_rng(20)
        Y = rng.standard_normal((25, 8))
        hyper = MsslHyper(p=8, r=1)
        samples = run_chain(Y, 1, hyper, McmcConfig(n_burnin=100, n_samples=200, seed=5))
        assert np.all(samples.sigma2_draws > 0)
        assert np.all(np.isfinite(samples.log_post))

    def test_thinning_count(self):
        rng = np.random.default_rng(21)
        Y = rng.standard_normal((20, 6))
        hyper = MsslHyper(p=6, r=1)
        samples = run_chain(Y, 1, hyper, McmcConfig(n_burnin=10, n_samples=90, thin=3, seed=2))
        assert samples.n_kept == 30

    def test_adaptation_frozen_after_burnin(self):
        # with adapt on, the frozen scales must reproduce the identical
        # sampling phase of a run whose proposal starts at those scales
        rng = np.random.default_rng(22)
        Y = rng.standard_normal((30, 6))
        hyper = MsslHyper(p=6, r=1)
        cfg = McmcConfig(n_burnin=80, n_samples=120, seed=9, adapt=True)
        samples = run_chain(Y, 1, hyper, cfg)
        assert samples.row_scales is not None
        assert np.all(samples.row_scales > 0)
        # acceptance rates over the sampling phase under frozen scales
        # stay inside the broad adaptation band
        assert 0.02 < np.mean(samples.accept_rows) < 0.95

    def test_beats_zero_estimator_baseline(self):
        from spikedcov.estimators import summarize
        from spikedcov.simulate import generate_truth, sample_data
        rng = np.random.default_rng(23)
        model = generate_truth(20, 1, 4, 10.0, 10.0, 1.0, rng)
        Y = sample_data(model, 50, rng)
        hyper = MsslHyper(p=20, r=1)
        samples = run_chain(Y, 1, hyper, McmcConfig(n_burnin=200, n_samples=200, seed=7))
        summary = summarize(samples)
        loss = np.linalg.norm(summary.sigma_hat - model.covariance(), 2)
        assert loss < np.linalg.norm(model.covariance(), 2)


class TestMultiSpikeChain:
    def test_four_spike_fit_recovers_subspace(self):
        from spikedcov.estimators import key_features, summarize
        from spikedcov.linalg import projection_distance
        from spikedcov.simulate import generate_truth, sample_data
        rng = np.random.default_rng([7200, 0xDA7A])
        model = generate_truth(200, 4, 40, 10.0, 20.0, 1.0, rng)
        Y = sample_data(model, 100, rng)
        hyper = MsslHyper(p=200, r=4)
        samples = run_chain(Y, 4, hyper, McmcConfig(n_burnin=500, n_samples=500, seed=7200))
        summary = summarize(samples)
        assert summary.rank_deficient_draws == 0
        assert projection_distance(summary.u_hat, model.U0) < 0.55
        found = set(key_features(summary.u_hat, 0.5 / np.sqrt(40)).tolist())
        truth = set(model.support.tolist())
        assert len(found & truth) >= 32  # at least 80% of the support
        assert len(found - truth) <= 4


class TestInitialState:
    def test_spectral_warm_start_shapes(self):
        rng = np.random.default_rng(24)
        Y = rng.standard_normal((15, 40))
        hyper = MsslHyper(p=40, r=3)
        state = initial_state(Y, 3, hyper, np.random.default_rng(0))
        assert state.B.shape == (40, 3)
        assert state.xi.sum() == 4  # ceil(40 / 10)
        assert state.sigma2 > 0
