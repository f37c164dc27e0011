"""Dense matrix numerics: norms, orthonormal frames, Procrustes alignment,
the CS decomposition, and subspace distances.

Everything operates on plain float64 ndarrays. Frames (matrices with
orthonormal columns) are validated at function boundaries with
``require_frame``; the construction tolerance is ``FRAME_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-9
EIG_RESIDUAL_TOL = 1e-8


def as_matrix(A: np.ndarray, name: str = "A") -> np.ndarray:
    """Coerce to a 2-d float64 array and reject non-finite entries."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def require_frame(U: np.ndarray, name: str = "U", tol: float = FRAME_TOL) -> np.ndarray:
    """Validate that U has orthonormal columns within ``tol`` (Frobenius)."""
    U = as_matrix(U, name)
    r = U.shape[1]
    gram_err = np.linalg.norm(U.T @ U - np.eye(r))
    if gram_err > tol:
        raise ValueError(f"{name} is not an orthonormal frame: ||U'U - I||_F = {gram_err:.3e}")
    return U


def op_norm(A: np.ndarray) -> float:
    """Operator (spectral) norm: the largest singular value of A."""
    A = as_matrix(A)
    return float(np.linalg.norm(A, 2))


def two_to_inf_norm(A: np.ndarray) -> float:
    """Two-to-infinity norm: the largest Euclidean row norm of A.

    This is the closed form of max_{||x||_2 = 1} ||Ax||_inf.
    """
    A = as_matrix(A)
    return float(np.max(np.linalg.norm(A, axis=1)))


def inf_norm(A: np.ndarray) -> float:
    """Matrix infinity norm: the largest l1 row norm of A."""
    A = as_matrix(A)
    return float(np.max(np.abs(A).sum(axis=1)))


def fix_sign(V: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-magnitude entry is positive.

    Ties in magnitude are broken by the first such index. Makes
    eigenvector output deterministic for serialization and tests.
    """
    V = np.array(V, dtype=float, copy=True)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def orthonormal_complement(U: np.ndarray) -> np.ndarray:
    """Return a p x (p - r) frame spanning the orthogonal complement of U.

    Deterministic: taken from the full SVD of U.
    """
    U = require_frame(U)
    p, r = U.shape
    if r >= p:
        raise ValueError("frame already spans the full space; no complement")
    full_u, _, _ = np.linalg.svd(U, full_matrices=True)
    comp = full_u[:, r:]
    # svd orders the range block first only up to rotation; project out U
    # explicitly to guard against degenerate rounding.
    comp = comp - U @ (U.T @ comp)
    q, _ = np.linalg.qr(comp)
    return q


def _complete_columns(cols: list[np.ndarray], dim: int, total: int) -> np.ndarray:
    """Assemble an orthonormal (dim x total) matrix whose listed columns are
    kept in place and whose ``None`` slots are filled from the orthogonal
    complement, in deterministic order."""
    have = [c for c in cols if c is not None]
    if have:
        M = np.column_stack(have)
    else:
        M = np.zeros((dim, 0))
    n_missing = total - M.shape[1]
    if n_missing > 0:
        # complement of span(M) via full SVD, first columns in order
        if M.shape[1] == 0:
            fill = np.eye(dim)[:, :n_missing]
        else:
            full_u, _, _ = np.linalg.svd(M, full_matrices=True)
            fill = full_u[:, M.shape[1]:]
            fill = fill - M @ (M.T @ fill)
            fill, _ = np.linalg.qr(fill)
            fill = fill[:, :n_missing]
        it = iter(fill.T)
        out = [c if c is not None else next(it) for c in cols]
        return np.column_stack(out)
    return M


@dataclass
class CsDecomp:
    """CS decomposition of a partitioned p x p orthogonal matrix W with an
    r x r leading block:

        W = diag(U11, U22) @ [[C, -S, 0], [S, C, 0], [0, 0, I]] @ diag(V11, V22)^T

    where C = diag(c), S = diag(s), c_k, s_k >= 0 and c_k^2 + s_k^2 = 1.
    """

    u11: np.ndarray
    u22: np.ndarray
    v11: np.ndarray
    v22: np.ndarray
    c: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        require_frame(self.u11, "u11")
        require_frame(self.u22, "u22")
        require_frame(self.v11, "v11")
        require_frame(self.v22, "v22")
        if np.any(self.c < 0) or np.any(self.s < 0):
            raise ValueError("cosine/sine values must be nonnegative")
        if np.max(np.abs(self.c**2 + self.s**2 - 1.0)) > FRAME_TOL:
            raise ValueError("c_k^2 + s_k^2 must equal 1")

    @property
    def r(self) -> int:
        return self.c.shape[0]

    def middle_factor(self) -> np.ndarray:
        """The p x p block factor [[C, -S, 0], [S, C, 0], [0, 0, I]]."""
        r = self.r
        p = r + self.u22.shape[0]
        K = np.zeros((p, p))
        K[:r, :r] = np.diag(self.c)
        K[:r, r:2 * r] = -np.diag(self.s)
        K[r:2 * r, :r] = np.diag(self.s)
        K[r:2 * r, r:2 * r] = np.diag(self.c)
        K[2 * r:, 2 * r:] = np.eye(p - 2 * r)
        return K

    def reconstruct(self) -> np.ndarray:
        r = self.r
        p = r + self.u22.shape[0]
        left = np.zeros((p, p))
        left[:r, :r] = self.u11
        left[r:, r:] = self.u22
        right = np.zeros((p, p))
        right[:r, :r] = self.v11
        right[r:, r:] = self.v22
        return left @ self.middle_factor() @ right.T


def cs_decompose(W: np.ndarray, r: int, tol: float = 1e-12) -> CsDecomp:
    """CS-decompose an orthogonal p x p matrix W partitioned with an r x r
    leading block. Requires 2r <= p.

    The factors are built from the SVD of W11 (cosines, sorted descending,
    ties by index) with the remaining blocks derived consistently, so the
    reconstruction matches W to floating-point accuracy.
    """
    W = as_matrix(W, "W")
    p = W.shape[0]
    if W.shape[1] != p:
        raise ValueError("W must be square")
    require_frame(W, "W")
    r = int(r)
    if r < 1 or 2 * r > p:
        raise ValueError(f"need 1 <= r and 2r <= p, got r={r}, p={p}")

    W11 = W[:r, :r]
    W12 = W[:r, r:]
    W21 = W[r:, :r]
    W22 = W[r:, r:]

    u11, c, v11t = np.linalg.svd(W11)
    v11 = v11t.T
    c = np.clip(c, 0.0, 1.0)

    # Columns of W21 @ V11 are orthogonal with norms s_k exactly.
    T = W21 @ v11
    s = np.linalg.norm(T, axis=0)
    cols: list[np.ndarray | None] = []
    for k in range(r):
        cols.append(T[:, k] / s[k] if s[k] > tol else None)
    cols.extend([None] * (p - 2 * r))
    u22 = _complete_columns(cols, p - r, p - r)
    # renormalize the (c, s) pairs onto the unit circle
    norms = np.sqrt(c**2 + s**2)
    c = c / norms
    s = s / norms

    # Remaining right factor from the two block identities
    #   U22' W22 = diag(C, I) V22', U11' W12 = [-S 0] V22'.
    X = u22.T @ W22
    Y = u11.T @ W12
    v22t = X.copy()
    v22t[:r] = c[:, None] * X[:r] - s[:, None] * Y
    # Polish: v22t should already be orthogonal; a QR pass absorbs the
    # rounding left by the completion columns without moving exact cases.
    q, rr = np.linalg.qr(v22t.T)
    v22 = q * np.sign(np.diag(rr))

    return CsDecomp(u11=u11, u22=u22, v11=v11, v22=v22, c=c, s=s)


def frobenius_alignment(U_hat: np.ndarray, U0: np.ndarray) -> np.ndarray:
    """Orthogonal Procrustes alignment: the r x r orthogonal W minimizing
    ||U_hat - U0 @ W||_F, computed as the polar factor of U0' U_hat."""
    U_hat = require_frame(U_hat, "U_hat")
    U0 = require_frame(U0, "U0")
    if U_hat.shape != U0.shape:
        raise ValueError(f"shape mismatch: {U_hat.shape} vs {U0.shape}")
    u, _, vt = np.linalg.svd(U0.T @ U_hat)
    return u @ vt


def projection_distance(U: np.ndarray, U0: np.ndarray) -> float:
    """Operator norm distance between the projections, ||UU' - U0 U0'||_2.

    Equals the sine of the largest principal angle; lies in [0, 1].
    """
    U = require_frame(U, "U")
    U0 = require_frame(U0, "U0")
    if U.shape != U0.shape:
        raise ValueError(f"shape mismatch: {U.shape} vs {U0.shape}")
    return float(np.linalg.norm(U @ U.T - U0 @ U0.T, 2))


def two_to_inf_loss(U: np.ndarray, U0: np.ndarray) -> float:
    """Worst-row Euclidean error after optimal orthogonal alignment,
    ||U - U0 @ W||_{2->inf} with W the Frobenius alignment."""
    W = frobenius_alignment(U, U0)
    return two_to_inf_norm(U - U0 @ W)


def alignment_frame(U: np.ndarray, U0: np.ndarray) -> np.ndarray:
    """The p x 2r frame [U0 @ U11, U0_perp @ U221] from the CS decomposition
    of [U0, U0_perp]' [U, U_perp]. Its two-to-infinity norm controls how the
    aligned row error relates to the projection distance."""
    U = require_frame(U, "U")
    U0 = require_frame(U0, "U0")
    p, r = U.shape
    if 2 * r >= p:
        raise ValueError(f"need 2r < p, got r={r}, p={p}")
    U0p = orthonormal_complement(U0)
    Up = orthonormal_complement(U)
    W = np.block([[U0.T @ U, U0.T @ Up], [U0p.T @ U, U0p.T @ Up]])
    cs = cs_decompose(W, r)
    return np.column_stack([U0 @ cs.u11, U0p @ cs.u22[:, :r]])


def two_to_inf_projection_bound(U: np.ndarray, U0: np.ndarray) -> tuple[float, float]:
    """Evaluate both sides of the aligned-row-error bound

        ||U - U0 W||_{2->inf}  <=  ||V||_{2->inf} (rho + rho^2),

    where rho is the projection distance and V is ``alignment_frame``.
    Returns (lhs, rhs).
    """
    lhs = two_to_inf_loss(U, U0)
    rho = projection_distance(U, U0)
    V = alignment_frame(U, U0)
    rhs = two_to_inf_norm(V) * (rho + rho**2)
    return lhs, rhs


def sym_eig_topk(S: np.ndarray, k: int, sym_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of a symmetric matrix, eigenvalues descending.

    Vector signs follow the ``fix_sign`` convention. Raises if S is not
    symmetric within ``sym_tol`` (relative to its scale).
    """
    S = as_matrix(S, "S")
    p = S.shape[0]
    if S.shape[1] != p:
        raise ValueError("S must be square")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > sym_tol * scale:
        raise ValueError("S is not symmetric within tolerance")
    k = int(k)
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= p, got k={k}, p={p}")
    vals, vecs = np.linalg.eigh(S)
    vals = vals[::-1][:k]
    vecs = fix_sign(vecs[:, ::-1][:, :k])
    return vals, vecs
