"""Posterior summaries and point estimators, plus a scikit-learn style
estimator wrapping the whole simulate-free pipeline (rank selection,
posterior sampling, summarization)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .linalg import frobenius_alignment, sym_eig_topk
from .prior import MsslHyper
from .sampler import ChainSamples, McmcConfig, run_chain, _left_singular_frame


@dataclass
class PosteriorSummary:
    """Point estimates pooled from one chain.

    sigma_hat is the posterior mean of B B' + sigma2 I, omega_hat the
    posterior mean of the subspace projection U_B U_B', u_hat the top-r
    eigenframe of omega_hat, and xi_freq the per-row slab inclusion
    frequency. ``rank_deficient_draws`` counts draws whose loading matrix
    needed orthonormal completion.
    """

    sigma_hat: np.ndarray
    omega_hat: np.ndarray
    u_hat: np.ndarray
    xi_freq: np.ndarray
    sigma2_mean: float
    rank_deficient_draws: int

    def __post_init__(self) -> None:
        if not np.allclose(self.sigma_hat, self.sigma_hat.T):
            raise ValueError("sigma_hat must be symmetric")
        if not np.allclose(self.omega_hat, self.omega_hat.T):
            raise ValueError("omega_hat must be symmetric")
        evals = np.linalg.eigvalsh(self.omega_hat)
        if evals.min() < -1e-8 or evals.max() > 1.0 + 1e-8:
            raise ValueError("omega_hat eigenvalues must lie in [0, 1]")


def summarize(samples: ChainSamples) -> PosteriorSummary:
    """Pool the kept draws into point estimates.

    Uses the running sums accumulated at keep time; the subspace estimate
    is the top-r eigenframe of the averaged projection. Accumulation is
    sequential over draws, so results are bit-stable across runs.
    """
    if samples.n_kept < 1:
        raise ValueError("need at least one kept draw")
    if samples.sigma_sum is None or samples.omega_sum is None:
        raise ValueError("samples carry no running sums; accumulate first")
    k = samples.n_kept
    sigma_hat = samples.sigma_sum / k
    omega_hat = samples.omega_sum / k
    _, u_hat = sym_eig_topk(omega_hat, samples.r)
    xi_freq = (samples.xi_sum / k if samples.xi_sum is not None
               else np.full(samples.p, np.nan))
    return PosteriorSummary(
        sigma_hat=sigma_hat,
        omega_hat=omega_hat,
        u_hat=u_hat,
        xi_freq=xi_freq,
        sigma2_mean=float(samples.sigma2_draws.mean()),
        rank_deficient_draws=samples.rank_deficient_draws,
    )


def estimate_rank(Y: np.ndarray, gamma: float = 2.0) -> int:
    """Diagonal-thresholding estimate of the number of spikes.

    With S the sample covariance (mean-zero model, so S = Y'Y/n) and
    sigma_tilde^2 the median of its diagonal, the candidate feature set is

        J = { j : S_jj > sigma_tilde^2 (1 + gamma sqrt(log p / n)) },

    and the estimate counts the eigenvalues of S_JJ exceeding
    sigma_tilde^2 (1 + gamma (sqrt(|J|/n) + sqrt(log p / n))), floored at
    one. An empty J warns and returns 1. The constant gamma = 2 is a
    calibration choice, adjustable by flag.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains non-finite entries")
    diag = np.einsum("ij,ij->j", Y, Y) / n
    sigma_tilde = float(np.median(diag))
    log_term = np.sqrt(np.log(p) / n)
    J = np.flatnonzero(diag > sigma_tilde * (1.0 + gamma * log_term))
    if J.size == 0:
        warnings.warn("diagonal thresholding selected no features; returning rank 1")
        return 1
    S_JJ = Y[:, J].T @ Y[:, J] / n
    evals = np.linalg.eigvalsh(S_JJ)
    cut = sigma_tilde * (1.0 + gamma * (np.sqrt(J.size / n) + log_term))
    return max(int(np.sum(evals > cut)), 1)


def key_features(u_hat: np.ndarray, tau: float) -> np.ndarray:
    """Rows of the subspace estimate whose scaled l1 norm strictly exceeds
    tau: { j : ||u_hat_j||_1 / r > tau }, sorted."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    u_hat = np.atleast_2d(np.asarray(u_hat, dtype=float))
    r = u_hat.shape[1]
    scores = np.abs(u_hat).sum(axis=1) / r
    return np.flatnonzero(scores > tau)


def aligned_subspace_draws(samples: ChainSamples,
                           reference: np.ndarray | None = None) -> np.ndarray:
    """Per-draw left singular frames of B, each rotated onto a common
    reference frame by the Frobenius orthogonal alignment.

    Raw draws are identified only up to right rotation, so entrywise
    statistics are meaningful only after this alignment. The default
    reference is the pooled subspace estimate.
    """
    if samples.b_draws is None or samples.n_kept < 1:
        raise ValueError("samples carry no loading draws")
    if reference is None:
        reference = summarize(samples).u_hat
    out = np.empty_like(samples.b_draws)
    for k in range(samples.n_kept):
        frame, _ = _left_singular_frame(samples.b_draws[k])
        out[k] = frame @ frobenius_alignment(reference, frame)
    return out


def credible_intervals(samples: ChainSamples, level: float,
                       reference: np.ndarray | None = None) -> np.ndarray:
    """Entrywise equal-tailed credible intervals of the aligned subspace
    draws.

    Returns an array of shape (p, r, 2) holding the level-(1 -/+ level)/2
    empirical quantiles of each aligned entry; level = 0 degenerates both
    endpoints to the median.
    """
    if not 0 <= level < 1:
        raise ValueError(f"level must lie in [0, 1), got {level}")
    draws = aligned_subspace_draws(samples, reference)
    lo = np.quantile(draws, (1.0 - level) / 2.0, axis=0)
    hi = np.quantile(draws, (1.0 + level) / 2.0, axis=0)
    return np.stack([lo, hi], axis=-1)


class SpikedCovarianceMSSL(TransformerMixin, BaseEstimator):
    """Bayesian spiked covariance estimation with joint row sparsity.

    Fits the latent-factor model y = B z + eps by
    Metropolis-within-Gibbs under a matrix spike-and-slab LASSO prior on
    the loading rows, and pools the posterior draws into point estimates
    of the covariance and its leading principal subspace.

    Parameters
    ----------
    n_spikes : int or "auto", default="auto"
        Number of spiked eigenvalues. "auto" applies diagonal
        thresholding (see ``estimate_rank``) with constant ``rank_gamma``.
    slab_rate : float, default=1.0
        Laplace rate of the slab component.
    kappa : float, default=1.0
        Exponent of the Beta(1, p^(1+kappa)) inclusion hyperprior.
    a_sigma, b_sigma : float, default=1.0
        Inverse-Gamma noise-variance prior parameters.
    n_burnin, n_samples, thin : int
        Chain schedule; defaults 1000/1000/1.
    proposal_sd : float, default=0.05
        Initial row proposal scale for the loading updates.
    adapt : bool, default=True
        Robbins-Monro proposal adaptation during burn-in.
    rank_gamma : float, default=2.0
        Threshold multiplier used when n_spikes="auto".
    random_state : int, default=0
        Chain seed; fits are deterministic given it.

    Attributes
    ----------
    covariance_ : ndarray of shape (p, p)
        Posterior-mean covariance estimate.
    components_ : ndarray of shape (n_spikes_, p)
        Orthonormal basis of the estimated principal subspace (rows).
    projection_ : ndarray of shape (p, p)
        Posterior-mean subspace projection matrix.
    inclusion_frequency_ : ndarray of shape (p,)
        Posterior frequency of each row being assigned to the slab.
    noise_variance_ : float
        Posterior-mean noise variance.
    n_spikes_ : int
        Rank actually fitted.
    samples_ : ChainSamples
        Raw thinned draws and diagnostics.
    """

    def __init__(self, n_spikes="auto", slab_rate=1.0, kappa=1.0,
                 a_sigma=1.0, b_sigma=1.0, n_burnin=1000, n_samples=1000,
                 thin=1, proposal_sd=0.05, adapt=True, rank_gamma=2.0,
                 random_state=0):
        self.n_spikes = n_spikes
        self.slab_rate = slab_rate
        self.kappa = kappa
        self.a_sigma = a_sigma
        self.b_sigma = b_sigma
        self.n_burnin = n_burnin
        self.n_samples = n_samples
        self.thin = thin
        self.proposal_sd = proposal_sd
        self.adapt = adapt
        self.rank_gamma = rank_gamma
        self.random_state = random_state

    def fit(self, X, y=None):
        """Run the chain on X (shape (n_samples, n_features)) and pool the
        posterior draws."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        n, p = X.shape
        if self.n_spikes == "auto":
            r = estimate_rank(X, gamma=self.rank_gamma)
        else:
            r = int(self.n_spikes)
        hyper = MsslHyper(lam=self.slab_rate, kappa=self.kappa,
                          a_sigma=self.a_sigma, b_sigma=self.b_sigma, p=p, r=r)
        config = McmcConfig(n_burnin=self.n_burnin, n_samples=self.n_samples,
                            thin=self.thin, proposal_sd=self.proposal_sd,
                            adapt=self.adapt, seed=self.random_state)
        self.samples_ = run_chain(X, r, hyper, config)
        summary = summarize(self.samples_)
        self.summary_ = summary
        self.n_features_in_ = p
        self.n_spikes_ = r
        self.covariance_ = summary.sigma_hat
        self.projection_ = summary.omega_hat
        self.components_ = summary.u_hat.T
        self.inclusion_frequency_ = summary.xi_freq
        self.noise_variance_ = summary.sigma2_mean
        return self

    def transform(self, X):
        """Project data onto the estimated principal subspace."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.components_.T

    def get_covariance(self):
        check_is_fitted(self, "covariance_")
        return self.covariance_

    def score(self, X, y=None):
        """Mean Gaussian log-likelihood of X under the fitted covariance."""
        check_is_fitted(self, "covariance_")
        X = check_array(X, dtype=np.float64)
        p = self.n_features_in_
        sign, logdet = np.linalg.slogdet(self.covariance_)
        if sign <= 0:
            raise ValueError("fitted covariance is not positive definite")
        quad = np.mean(np.einsum("ij,jk,ik->i", X, np.linalg.inv(self.covariance_), X))
        return float(-0.5 * (p * np.log(2 * np.pi) + logdet + quad))

    def key_features(self, tau: float) -> np.ndarray:
        """Rows of the fitted subspace whose scaled l1 norm exceeds tau."""
        check_is_fitted(self, "components_")
        return key_features(self.components_.T, tau)
