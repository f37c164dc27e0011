"""Loss kernel comparing a (covariance, subspace) estimate to the truth."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .linalg import inf_norm, op_norm, projection_distance, two_to_inf_loss


@dataclass
class LossReport:
    """Covariance and subspace losses for one (estimate, truth) pair.

    op_loss, frob_loss and inf_loss measure the covariance error in the
    operator, Frobenius and matrix-infinity norms; proj_loss_sq is the
    squared projection operator norm distance between the subspaces and
    two_inf_loss_sq the squared worst-row error after optimal alignment.
    """

    op_loss: float
    proj_loss_sq: float
    two_inf_loss_sq: float
    frob_loss: float
    inf_loss: float

    def __post_init__(self) -> None:
        for name, v in asdict(self).items():
            if v < 0 or not np.isfinite(v):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    FIELDS = ("op_loss", "proj_loss_sq", "two_inf_loss_sq", "frob_loss", "inf_loss")


def compute_losses(sigma_hat: np.ndarray, u_hat: np.ndarray,
                   sigma0: np.ndarray, u0: np.ndarray) -> LossReport:
    diff = np.asarray(sigma_hat, dtype=float) - np.asarray(sigma0, dtype=float)
    return LossReport(
        op_loss=op_norm(diff),
        proj_loss_sq=projection_distance(u_hat, u0) ** 2,
        two_inf_loss_sq=two_to_inf_loss(u_hat, u0) ** 2,
        frob_loss=float(np.linalg.norm(diff)),
        inf_loss=inf_norm(diff),
    )
