"""
Numeric kernel shared by every perturbation module.

Seeded randomness, orthonormal sampling, a one-sided Jacobi SVD and sample
covariance. Matrices follow the data convention used throughout pertubox:
a numeric block is d x n (attributes x records).
"""

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from pertubox.errors import ParameterError

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]

_SEED_MASK = (1 << 64) - 1
_JACOBI_MAX_SWEEPS = 80


@dataclass(frozen=True)
class Rng:
    """
    Named, splittable random stream.

    Each (seed, label) pair maps to its own Philox key, so a stream is
    reproducible on its own and independent of every other label. Calling
    `generator()` twice yields two generators producing the same sequence.

    Example:
        rng = Rng(seed=7)
        r = random_orthonormal(4, rng.child("rotation/R"))
    """

    seed: int
    label: str = ""

    def child(self, name: str) -> "Rng":
        """Derive the sub-stream `<label>/<name>`."""
        label = f"{self.label}/{name}" if self.label else name
        return Rng(seed=self.seed, label=label)

    def key(self) -> npt.NDArray[np.uint64]:
        seed_bytes = (self.seed & _SEED_MASK).to_bytes(8, "little")
        digest = hashlib.blake2b(
            self.label.encode("utf-8"), digest_size=16, key=seed_bytes
        ).digest()
        return np.frombuffer(digest, dtype="<u8").astype(np.uint64)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(key=self.key()))


@dataclass(frozen=True)
class SvdResult:
    """Full singular value decomposition A = U diag(singular_values) Vt."""

    U: Matrix
    singular_values: npt.NDArray[np.float64]
    Vt: Matrix

    def reconstruct(self, rank: int | None = None) -> Matrix:
        """Rebuild A, or its best rank-`rank` approximation."""
        s = len(self.singular_values) if rank is None else rank
        return (self.U[:, :s] * self.singular_values[:s]) @ self.Vt[:s, :]


def random_orthonormal(d: int, rng: Rng) -> Matrix:
    """
    Haar-distributed d x d orthonormal matrix.

    QR of an i.i.d. standard Gaussian matrix, with column signs fixed so that
    R has a positive diagonal.
    """
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    gaussian = rng.generator().standard_normal((d, d))
    q, r = np.linalg.qr(gaussian)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return np.ascontiguousarray(q * signs)


def _jacobi_tall(a: Matrix) -> tuple[Matrix, npt.NDArray[np.float64], Matrix]:
    """One-sided Jacobi on a matrix with rows >= columns."""
    n, m = a.shape
    work = a.copy()
    v = np.eye(m)
    tol = max(n, m) * np.finfo(np.float64).eps

    for sweep in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for i in range(m - 1):
            for j in range(i + 1, m):
                alpha = float(work[:, i] @ work[:, i])
                beta = float(work[:, j] @ work[:, j])
                gamma = float(work[:, i] @ work[:, j])
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t

                wi = work[:, i].copy()
                work[:, i] = c * wi - s * work[:, j]
                work[:, j] = s * wi + c * work[:, j]

                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
        if not rotated:
            logger.debug("jacobi converged after %d sweeps", sweep + 1)
            break
    else:
        logger.warning("jacobi SVD hit the sweep limit (%d)", _JACOBI_MAX_SWEEPS)

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]

    cutoff = max(n, m) * np.finfo(np.float64).eps * (sigma[0] if m else 0.0)
    rank = int(np.sum(sigma > cutoff))
    u_r = work[:, :rank] / sigma[:rank]

    # Orthonormal completion of the left basis.
    if rank:
        q, _ = np.linalg.qr(u_r, mode="complete")
        u = np.hstack([u_r, q[:, rank:]])
    else:
        u = np.eye(n)
    return u, sigma, v.T


def svd(a: npt.ArrayLike) -> SvdResult:
    """
    Full SVD of an n x m matrix by one-sided Jacobi rotations.

    U is n x n, Vt is m x m, singular values are descending with length
    min(n, m).
    """
    matrix = np.asarray(a, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ParameterError("svd needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(matrix)):
        raise ParameterError("svd needs finite entries")

    n, m = matrix.shape
    if n >= m:
        u, sigma, vt = _jacobi_tall(matrix)
    else:
        u_t, sigma, vt_t = _jacobi_tall(matrix.T)
        u, vt = vt_t.T, u_t.T
    return SvdResult(U=u, singular_values=sigma[: min(n, m)], Vt=vt)


def covariance(x: npt.ArrayLike) -> Matrix:
    """Sample covariance (1/(n-1)) of a d x n block; rows are variables."""
    block = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if block.shape[1] < 2:
        raise ParameterError(f"covariance needs at least 2 records, got {block.shape[1]}")
    centered = block - block.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / (block.shape[1] - 1)
    return (cov + cov.T) / 2.0
