"""Ground-truth construction, Gaussian data simulation, and the
closed-form pair of rank-one perturbations with matched projection error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import require_frame, fix_sign


@dataclass
class SpikedCovModel:
    """Ground truth (U0, Lambda0, sigma0_sq) with jointly sparse U0.

    Rows of U0 outside ``support`` are exactly zero; the spike values are
    sorted descending. sigma0_sq = 0 is tolerated only for degenerate
    test scenarios (the covariance is then merely PSD).
    """

    U0: np.ndarray            # (p, r) orthonormal columns
    Lambda0: np.ndarray       # (r,) descending positive spikes
    sigma0_sq: float
    support: np.ndarray       # sorted row indices, size s

    def __post_init__(self) -> None:
        self.U0 = np.asarray(self.U0, dtype=float)
        self.Lambda0 = np.atleast_1d(np.asarray(self.Lambda0, dtype=float))
        self.support = np.asarray(self.support, dtype=int)
        p, r = self.U0.shape
        if r != self.Lambda0.shape[0]:
            raise ValueError("Lambda0 length must match the number of columns of U0")
        if r > 0:
            require_frame(self.U0, "U0")
            if np.any(np.diff(self.Lambda0) > 0) or np.any(self.Lambda0 <= 0):
                raise ValueError("Lambda0 must be positive and descending")
        if self.sigma0_sq < 0:
            raise ValueError("sigma0_sq must be nonnegative")
        mask = np.zeros(p, dtype=bool)
        mask[self.support] = True
        if r > 0 and np.any(self.U0[~mask] != 0.0):
            raise ValueError("U0 must vanish exactly off the support")

    @property
    def p(self) -> int:
        return self.U0.shape[0]

    @property
    def r(self) -> int:
        return self.U0.shape[1]

    @property
    def s(self) -> int:
        return self.support.shape[0]

    def covariance(self) -> np.ndarray:
        """Dense Sigma0 = U0 Lambda0 U0' + sigma0_sq I."""
        return (self.U0 * self.Lambda0) @ self.U0.T + self.sigma0_sq * np.eye(self.p)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "r": self.r,
            "support": self.support.tolist(),
            "Lambda0": self.Lambda0.tolist(),
            "sigma0_sq": self.sigma0_sq,
            "U0_block": self.U0[self.support].tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpikedCovModel":
        support = np.asarray(d["support"], dtype=int)
        U0 = np.zeros((int(d["p"]), int(d["r"])))
        U0[support] = np.asarray(d["U0_block"], dtype=float)
        return cls(U0=U0, Lambda0=np.asarray(d["Lambda0"], dtype=float),
                   sigma0_sq=float(d["sigma0_sq"]), support=support)


def generate_truth(p: int, r: int, s: int, lam_min: float, lam_max: float,
                   sigma0_sq: float, rng: np.random.Generator,
                   loading_block: np.ndarray | None = None) -> SpikedCovModel:
    """Draw a jointly sparse ground truth.

    The support is sampled uniformly without replacement from the p rows;
    the nonzero block of U0 is the left singular frame of an s x r matrix
    of independent Unif(1, 2) entries (overridable through
    ``loading_block`` for tests); the spikes are equally spaced from
    lam_max down to lam_min, with the single value lam_max when r = 1.
    """
    if not (1 <= r <= s <= p):
        raise ValueError(f"need 1 <= r <= s <= p, got r={r}, s={s}, p={p}")
    if lam_min > lam_max or lam_min <= 0:
        raise ValueError("need 0 < lam_min <= lam_max")
    support = np.sort(rng.choice(p, size=s, replace=False))
    block = rng.uniform(1.0, 2.0, size=(s, r)) if loading_block is None else np.asarray(loading_block, dtype=float)
    if block.shape != (s, r):
        raise ValueError(f"loading block must have shape {(s, r)}")
    ustar, _, _ = np.linalg.svd(block, full_matrices=False)
    U0 = np.zeros((p, r))
    U0[support] = fix_sign(ustar[:, :r])
    lam = np.linspace(lam_max, lam_min, r) if r > 1 else np.array([float(lam_max)])
    return SpikedCovModel(U0=U0, Lambda0=lam, sigma0_sq=float(sigma0_sq), support=support)


def sample_data(model: SpikedCovModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """n iid rows from N(0, Sigma0), generated through the factor form
    y = U0 Lambda0^(1/2) z + sigma0 eps."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    p, r = model.U0.shape
    signal = np.zeros((n, p))
    if r > 0:
        Z = rng.standard_normal((n, r))
        signal = Z @ (model.U0 * np.sqrt(model.Lambda0)).T
    noise = rng.standard_normal((n, p)) if model.sigma0_sq > 0 else 0.0
    return signal + np.sqrt(model.sigma0_sq) * noise


def max_feasible_eps(s: int) -> float:
    """Largest perturbation for which the matched-projection-error
    companion below exists with delta in (0, 1)."""
    # delta < 1 requires c(delta) > 1/sqrt(1+s), i.e.
    # c(eps) > 1 - 2/s + 2/(s sqrt(1+s)).
    target = 1.0 - 2.0 / s + 2.0 / (s * np.sqrt(1.0 + s))
    return float(np.sqrt((1.0 / target**2 - 1.0) / s))


def motivating_pair(s: int, p: int, eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A rank-one truth plus two unit-norm perturbations with identical
    projection operator norm error but different worst-row error.

    The truth u0 puts mass 1/sqrt(s) on its first s coordinates. The
    first perturbation spreads the error over all s support entries
    (half tilted up by eps, half down, rescaled to unit norm); the second
    concentrates it in two entries tilted by delta, where delta solves

        c(delta) = (s/2) * (c(eps) - 1 + 2/s),   c(x) = 1/sqrt(1 + s x^2),

    which matches the two inner products with u0 and hence the two
    projection errors exactly. Raises when eps exceeds
    ``max_feasible_eps(s)`` (no delta in (0, 1) exists).
    """
    if s < 4 or s % 2:
        raise ValueError(f"s must be even and >= 4, got {s}")
    if s > p:
        raise ValueError(f"need s <= p, got s={s}, p={p}")
    if eps < 0:
        raise ValueError("eps must be nonnegative")

    root_s = np.sqrt(s)
    c_eps = 1.0 / np.sqrt(1.0 + s * eps**2)
    u0 = np.zeros((p, 1))
    u0[:s, 0] = 1.0 / root_s

    u1 = np.zeros((p, 1))
    u1[: s // 2, 0] = c_eps * (1.0 / root_s + eps)
    u1[s // 2: s, 0] = c_eps * (1.0 / root_s - eps)

    c_delta = (s / 2.0) * (c_eps - 1.0 + 2.0 / s)
    if eps == 0.0:
        delta = 0.0
        c_delta = 1.0
    else:
        if not 1.0 / np.sqrt(1.0 + s) < c_delta < 1.0:
            raise ValueError(
                "no matching two-entry perturbation with delta in (0, 1) for "
                f"eps={eps:g}; the largest feasible eps for s={s} is "
                f"{max_feasible_eps(s):.6g}"
            )
        delta = float(np.sqrt((1.0 / c_delta**2 - 1.0) / s))
    u2 = np.zeros((p, 1))
    u2[0, 0] = c_delta * (1.0 / root_s + delta)
    u2[1: s - 1, 0] = 1.0 / root_s
    u2[s - 1, 0] = c_delta * (1.0 / root_s - delta)

    for u, name in ((u0, "u0"), (u1, "u1"), (u2, "u2")):
        err = abs(np.linalg.norm(u) - 1.0)
        if err > 1e-12:
            raise AssertionError(f"{name} failed unit normalization by {err:.2e}")
    return u0, u1, u2
