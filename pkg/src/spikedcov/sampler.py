"""Metropolis-within-Gibbs sampler for the latent-factor form of the
spiked covariance model.

Data rows follow y_i = B z_i + eps_i with z_i ~ N(0, I_r) and
eps_i ~ N(0, sigma2 I_p), so Sigma = B B' + sigma2 I. One sweep updates,
in this fixed order:

    Z (conjugate Gaussian) -> B rows (random-walk MH) -> xi (exact)
      -> theta (conjugate Beta) -> lambda0 (MH on log scale)
      -> sigma2 (conjugate inverse-Gamma).

The B-row conditionals are mutually independent given (Z, sigma2, xi,
lambda0) because the Gaussian likelihood factorizes over data columns and
the prior over rows, so all p row proposals are evaluated in one
vectorized block; acceptance is still counted per row. Row proposal
scales and the lambda0 proposal scale adapt by Robbins-Monro during
burn-in only and are frozen afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .prior import (
    MsslHyper,
    LAMBDA0_CAP,
    double_gamma_logpdf,
    lambda0_log_prior,
    sample_lambda0,
)

ACCEPT_TARGET = 0.30
LOG_SCALE_BOUNDS = (np.log(1e-12), np.log(1e3))


@dataclass
class McmcConfig:
    """Chain-length and proposal settings."""

    n_burnin: int = 1000
    n_samples: int = 1000
    thin: int = 1
    proposal_sd: float = 0.05
    adapt: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_burnin", "n_samples", "thin"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.proposal_sd < 0:
            raise ValueError("proposal_sd must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "McmcConfig":
        keys = ("n_burnin", "n_samples", "thin", "proposal_sd", "adapt", "seed")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass
class ChainState:
    """One point of the Markov chain."""

    B: np.ndarray          # (p, r) loadings
    xi: np.ndarray         # (p,) slab indicators, bool
    Z: np.ndarray          # (n, r) latent factors, one row per observation
    theta: float
    lambda0: float
    sigma2: float

    def __post_init__(self) -> None:
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if self.B.shape[1] != self.Z.shape[1] or self.B.shape[0] != self.xi.shape[0]:
            raise ValueError("inconsistent state dimensions")

    def copy(self) -> "ChainState":
        return ChainState(self.B.copy(), self.xi.copy(), self.Z.copy(),
                          self.theta, self.lambda0, self.sigma2)


@dataclass
class ChainSamples:
    """Thinned post-burn-in draws plus running sums and diagnostics.

    ``sigma_sum`` and ``omega_sum`` accumulate B B' + sigma2 I and
    U_B U_B' over kept draws (U_B the left singular frame of B);
    ``summarize`` divides by n_kept. B draws whose numerical rank fell
    below r are completed to a full frame and counted.
    """

    n: int
    p: int
    r: int
    hyper: MsslHyper
    config: McmcConfig
    b_draws: np.ndarray | None = None          # (n_kept, p, r)
    sigma2_draws: np.ndarray | None = None     # (n_kept,)
    xi_draws: np.ndarray | None = None         # (n_kept, p) uint8
    sigma_sum: np.ndarray | None = None        # (p, p)
    omega_sum: np.ndarray | None = None        # (p, p)
    xi_sum: np.ndarray | None = None           # (p,)
    log_post: np.ndarray | None = None         # (n_kept,)
    accept_rows: np.ndarray | None = None      # (p,) post-burn-in rates
    accept_lambda0: float = 0.0
    rank_deficient_draws: int = 0
    row_scales: np.ndarray | None = None       # frozen per-row proposal sd
    lambda0_scale: float = 0.0

    @property
    def n_kept(self) -> int:
        return 0 if self.b_draws is None else self.b_draws.shape[0]


def update_factors(state: ChainState, Y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw Z from its Gaussian full conditional.

    Each row is independent N(M B' y_i, sigma2 M) with
    M = (B'B + sigma2 I)^(-1).
    """
    B, sigma2 = state.B, state.sigma2
    r = B.shape[1]
    M = np.linalg.inv(B.T @ B + sigma2 * np.eye(r))
    mean = Y @ B @ M.T
    chol = np.linalg.cholesky(sigma2 * M)
    return mean + rng.standard_normal(mean.shape) @ chol.T


def factor_conditional(B: np.ndarray, sigma2: float, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of z_i | y_i for one observation (test surface)."""
    r = B.shape[1]
    M = np.linalg.inv(B.T @ B + sigma2 * np.eye(r))
    return M @ (B.T @ y), sigma2 * M


def noise_variance_posterior(Y: np.ndarray, Z: np.ndarray, B: np.ndarray,
                             hyper: MsslHyper) -> tuple[float, float]:
    """Inverse-Gamma (shape, rate) of sigma2 | rest:
    (a_sigma + np/2, b_sigma + residual sum of squares / 2)."""
    n, p = Y.shape
    resid = Y - Z @ B.T
    return hyper.a_sigma + 0.5 * n * p, hyper.b_sigma + 0.5 * float(np.sum(resid * resid))


def update_noise_variance(state: ChainState, Y: np.ndarray, hyper: MsslHyper,
                          rng: np.random.Generator) -> float:
    shape, rate = noise_variance_posterior(Y, state.Z, state.B, hyper)
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def inclusion_posterior(xi: np.ndarray, hyper: MsslHyper) -> tuple[float, float]:
    """Beta (a, b) of theta | xi: (1 + sum xi, p^(1+kappa) + p - sum xi)."""
    k = float(np.sum(xi))
    return 1.0 + k, hyper.theta_beta_b + hyper.p - k


def update_inclusion_probability(state: ChainState, hyper: MsslHyper,
                                 rng: np.random.Generator) -> float:
    a, b = inclusion_posterior(state.xi, hyper)
    return float(rng.beta(a, b))


def indicator_probabilities(B: np.ndarray, theta: float, lam: float,
                            lam0: float) -> np.ndarray:
    """P(xi_j = 1 | B_j, theta, lambda0) for every row, in log space.

    The slab weight is theta * prod_k psi_1(b_jk | lam); the spike weight
    (1 - theta) * prod_k psi_{1/r}(b_jk | lam + lam0). Combined with
    logaddexp so extreme rates cannot overflow.
    """
    r = B.shape[1]
    log_slab = double_gamma_logpdf(B, 1.0, lam).sum(axis=1)
    log_spike = double_gamma_logpdf(B, 1.0 / r, lam + lam0).sum(axis=1)
    with np.errstate(divide="ignore"):
        ls = log_slab + np.log(theta)
        lp = log_spike + np.log1p(-theta)
    if theta <= 0:
        return np.zeros(B.shape[0])
    if theta >= 1:
        return np.ones(B.shape[0])
    return np.exp(ls - np.logaddexp(ls, lp))


def update_indicators(state: ChainState, hyper: MsslHyper,
                      rng: np.random.Generator) -> np.ndarray:
    prob = indicator_probabilities(state.B, state.theta, hyper.lam, state.lambda0)
    return rng.uniform(size=prob.shape[0]) < prob


def spike_rate_log_target(lam0: float, B: np.ndarray, xi: np.ndarray,
                          hyper: MsslHyper) -> float:
    """Unnormalized log conditional of lambda0: truncated prior times the
    spike density of every row with xi_j = 0."""
    lp = lambda0_log_prior(lam0, hyper)
    if not np.isfinite(lp):
        return -np.inf
    spike = ~np.asarray(xi, dtype=bool)
    if spike.any():
        lp += float(double_gamma_logpdf(B[spike], hyper.spike_shape, hyper.lam + lam0).sum())
    return lp


def update_spike_rate(state: ChainState, hyper: MsslHyper, log_sd: float,
                      rng: np.random.Generator) -> tuple[float, bool]:
    """One random-walk MH step on log(lambda0).

    The log-normal proposal carries the Jacobian term log(lam0'/lam0) in
    the acceptance ratio. Returns (new value, accepted flag); a zero
    proposal scale leaves lambda0 unchanged and counts as accepted.
    """
    lam0 = state.lambda0
    sd = float(np.exp(log_sd)) if np.isfinite(log_sd) else 0.0
    step = sd * rng.standard_normal()
    prop = lam0 * float(np.exp(step))
    if prop == lam0:
        return lam0, True
    log_acc = (spike_rate_log_target(prop, state.B, state.xi, hyper) + np.log(prop)
               - spike_rate_log_target(lam0, state.B, state.xi, hyper) - np.log(lam0))
    if np.log(rng.uniform()) < log_acc:
        return float(prop), True
    return lam0, False


def loadings_log_likelihood_terms(B: np.ndarray, gram: np.ndarray,
                                  zty: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-row Gaussian log-likelihood of the loadings up to a shared
    constant: -(b_j' Z'Z b_j - 2 b_j' Z'Y_j) / (2 sigma2).

    ``gram`` is Z'Z and ``zty`` is Z'Y, so row j touches only data
    column j.
    """
    quad = np.einsum("jk,kl,jl->j", B, gram, B)
    cross = np.einsum("jk,kj->j", B, zty)
    return -(quad - 2.0 * cross) / (2.0 * sigma2)


def row_log_priors(B: np.ndarray, xi: np.ndarray, lam: float, lam0: float) -> np.ndarray:
    """Vector of row log prior densities given the indicators."""
    r = B.shape[1]
    slab = double_gamma_logpdf(B, 1.0, lam).sum(axis=1)
    spike = double_gamma_logpdf(B, 1.0 / r, lam + lam0).sum(axis=1)
    return np.where(np.asarray(xi, dtype=bool), slab, spike)


def update_loadings(state: ChainState, Y: np.ndarray, hyper: MsslHyper,
                    log_sd_rows: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random-walk MH on every loading row; returns (new B, accept mask).

    All rows are proposed and accepted/rejected in index order within one
    vectorized block; their conditionals do not interact. Zero proposal
    scale reproduces the current row and counts as accepted.
    """
    B, Z, sigma2 = state.B, state.Z, state.sigma2
    p, r = B.shape
    gram = Z.T @ Z
    zty = Z.T @ Y
    prop = B + np.exp(log_sd_rows)[:, None] * rng.standard_normal((p, r))
    log_acc = (loadings_log_likelihood_terms(prop, gram, zty, sigma2)
               - loadings_log_likelihood_terms(B, gram, zty, sigma2)
               + row_log_priors(prop, state.xi, hyper.lam, state.lambda0)
               - row_log_priors(B, state.xi, hyper.lam, state.lambda0))
    accept = np.log(rng.uniform(size=p)) < log_acc
    new_B = np.where(accept[:, None], prop, B)
    return new_B, accept


def log_posterior(state: ChainState, Y: np.ndarray, hyper: MsslHyper) -> float:
    """Unnormalized log joint density of (state, Y) under the augmented model."""
    n, p = Y.shape
    resid = Y - state.Z @ state.B.T
    ll = -0.5 * n * p * np.log(2 * np.pi * state.sigma2) - 0.5 * np.sum(resid**2) / state.sigma2
    ll += -0.5 * np.sum(state.Z**2) - 0.5 * state.Z.size * np.log(2 * np.pi)
    ll += float(np.sum(row_log_priors(state.B, state.xi, hyper.lam, state.lambda0)))
    k = float(np.sum(state.xi))
    with np.errstate(divide="ignore"):
        ll += k * np.log(state.theta) + (p - k) * np.log1p(-state.theta)
    ll += (hyper.theta_beta_b - 1.0) * np.log1p(-state.theta)
    ll += lambda0_log_prior(state.lambda0, hyper)
    ll += -(hyper.a_sigma + 1.0) * np.log(state.sigma2) - hyper.b_sigma / state.sigma2
    return float(ll)


def initial_state(Y: np.ndarray, r: int, hyper: MsslHyper,
                  rng: np.random.Generator) -> ChainState:
    """Spectral warm start.

    B0 = U sqrt(max(L - s2, 0)) from the top-r eigenpairs of the sample
    covariance, sigma2_0 the mean of the remaining eigenvalues, xi0 = 1 on
    the ceil(p/10) rows of largest norm, theta0 and lambda0_0 from their
    priors.
    """
    n, p = Y.shape
    # eigenpairs of Y'Y/n via the SVD of Y; avoids forming p x p at large p
    _, sv, vt = np.linalg.svd(Y, full_matrices=False)
    evals = np.zeros(p)
    evals[:sv.shape[0]] = sv**2 / n
    sigma2 = float(np.mean(evals[r:])) if p > r else 1.0
    sigma2 = max(sigma2, 1e-12)
    scale = np.sqrt(np.maximum(evals[:r] - sigma2, 0.0))
    B = vt[:r].T * scale
    s_guess = int(np.ceil(p / 10))
    order = np.argsort(-np.linalg.norm(B, axis=1), kind="stable")
    xi = np.zeros(p, dtype=bool)
    xi[order[:s_guess]] = True
    theta = float(rng.beta(1.0, hyper.theta_beta_b))
    lambda0 = sample_lambda0(hyper, rng)
    Z = rng.standard_normal((n, r))
    return ChainState(B=B, xi=xi, Z=Z, theta=theta, lambda0=lambda0, sigma2=sigma2)


def _left_singular_frame(B: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, bool]:
    """Left singular frame of B, padded with an orthonormal completion when
    the numerical rank falls short of r. Returns (frame, was_deficient)."""
    u, sv, _ = np.linalg.svd(B, full_matrices=False)
    r = B.shape[1]
    cut = tol * max(sv[0], 1.0) if sv.size else 0.0
    rank = int(np.sum(sv > cut))
    if rank >= r:
        return u, False
    keep = u[:, :rank]
    full_u, _, _ = np.linalg.svd(keep if rank else np.zeros((B.shape[0], 1)),
                                 full_matrices=True)
    pad = full_u[:, rank:rank + (r - rank)] if rank else full_u[:, :r]
    return np.column_stack([keep, pad]) if rank else pad, True


def run_chain(Y: np.ndarray, r: int, hyper: MsslHyper, config: McmcConfig) -> ChainSamples:
    """Run burn-in plus sampling sweeps and collect thinned draws.

    Deterministic given (Y, hyper, config). Raises on non-finite data
    before any sampling.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-d array of shape (n, p)")
    n, p = Y.shape
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains non-finite entries")
    if n < 2:
        raise ValueError(f"need n >= 2 observations, got {n}")
    r = int(r)
    if not 1 <= r <= min(n, p):
        raise ValueError(f"need 1 <= r <= min(n, p), got r={r}")
    if hyper.p != p or hyper.r != r:
        raise ValueError("hyper (p, r) does not match the data and requested rank")

    rng = np.random.default_rng(config.seed)
    state = initial_state(Y, r, hyper, rng)

    log_sd_rows = np.full(p, np.log(config.proposal_sd) if config.proposal_sd > 0 else -np.inf)
    log_sd_l0 = np.log(0.5)

    n_kept = config.n_samples // config.thin
    b_draws = np.empty((n_kept, p, r))
    sigma2_draws = np.empty(n_kept)
    xi_draws = np.empty((n_kept, p), dtype=np.uint8)
    log_post = np.empty(n_kept)
    sigma_sum = np.zeros((p, p))
    omega_sum = np.zeros((p, p))
    xi_sum = np.zeros(p)
    accept_rows = np.zeros(p)
    accept_l0 = 0.0
    rank_deficient = 0
    kept = 0
    eye = np.eye(p)

    total = config.n_burnin + config.n_samples
    for it in range(total):
        state.Z = update_factors(state, Y, rng)
        state.B, acc_rows = update_loadings(state, Y, hyper, log_sd_rows, rng)
        state.xi = update_indicators(state, hyper, rng)
        state.theta = update_inclusion_probability(state, hyper, rng)
        state.lambda0, acc_l0 = update_spike_rate(state, hyper, log_sd_l0, rng)
        state.sigma2 = update_noise_variance(state, Y, hyper, rng)

        burnin = it < config.n_burnin
        if burnin and config.adapt and config.proposal_sd > 0:
            gain = 1.0 / (1.0 + it) ** 0.6
            log_sd_rows += gain * (acc_rows.astype(float) - ACCEPT_TARGET)
            log_sd_l0 += gain * (float(acc_l0) - ACCEPT_TARGET)
            np.clip(log_sd_rows, *LOG_SCALE_BOUNDS, out=log_sd_rows)
            log_sd_l0 = float(np.clip(log_sd_l0, *LOG_SCALE_BOUNDS))
        if not burnin:
            j = it - config.n_burnin
            accept_rows += acc_rows
            accept_l0 += float(acc_l0)
            if j % config.thin == 0 and kept < n_kept:
                b_draws[kept] = state.B
                sigma2_draws[kept] = state.sigma2
                xi_draws[kept] = state.xi
                log_post[kept] = log_posterior(state, Y, hyper)
                sigma_sum += state.B @ state.B.T + state.sigma2 * eye
                frame, deficient = _left_singular_frame(state.B)
                omega_sum += frame @ frame.T
                xi_sum += state.xi
                rank_deficient += int(deficient)
                kept += 1

    return ChainSamples(
        n=n, p=p, r=r, hyper=hyper, config=config,
        b_draws=b_draws, sigma2_draws=sigma2_draws, xi_draws=xi_draws,
        sigma_sum=sigma_sum, omega_sum=omega_sum, xi_sum=xi_sum,
        log_post=log_post,
        accept_rows=accept_rows / config.n_samples,
        accept_lambda0=accept_l0 / config.n_samples,
        rank_deficient_draws=rank_deficient,
        row_scales=np.exp(log_sd_rows),
        lambda0_scale=float(np.exp(log_sd_l0)),
    )


def accumulate_from_draws(samples: ChainSamples) -> ChainSamples:
    """Recompute the running sums from stored draws (used after reading a
    chain file; same accumulation order as run_chain)."""
    p = samples.p
    sigma_sum = np.zeros((p, p))
    omega_sum = np.zeros((p, p))
    eye = np.eye(p)
    deficient = 0
    for k in range(samples.n_kept):
        B = samples.b_draws[k]
        sigma_sum += B @ B.T + samples.sigma2_draws[k] * eye
        frame, bad = _left_singular_frame(B)
        omega_sum += frame @ frame.T
        deficient += int(bad)
    samples.sigma_sum = sigma_sum
    samples.omega_sum = omega_sum
    samples.rank_deficient_draws = deficient
    if samples.xi_draws is not None:
        samples.xi_sum = samples.xi_draws.sum(axis=0).astype(float)
    return samples
