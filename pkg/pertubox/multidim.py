"""
Multi-dimensional perturbation: condensation, random rotation and geometric
perturbation G(X) = R X + t 1^T + Delta.

All three act on the d x n numeric block of an all-numeric Dataset and keep
the schema untouched.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from pertubox.dataset import Dataset
from pertubox.errors import ParameterError
from pertubox.linalg import Matrix, Rng, covariance, random_orthonormal

logger = logging.getLogger(__name__)

_RANK_TOL = 1e-12


@dataclass(frozen=True)
class CondensationGroup:
    members: tuple[int, ...]
    mean: npt.NDArray[np.float64]
    covariance: Matrix

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class CondensationGroups:
    """Record groups of size K..2K-1 with their mean and covariance."""

    group_size: int
    groups: tuple[CondensationGroup, ...]

    def to_dict(self) -> dict[str, object]:
        return {
            "group_size": self.group_size,
            "groups": [
                {
                    "members": list(g.members),
                    "mean": g.mean.tolist(),
                    "covariance": g.covariance.tolist(),
                }
                for g in self.groups
            ],
        }


@dataclass(frozen=True)
class GeometricSecret:
    """Rotation R, translation t and noise level sigma of a geometric perturbation."""

    rotation: Matrix
    translation: npt.NDArray[np.float64]
    sigma: float

    def to_dict(self) -> dict[str, object]:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "sigma": self.sigma,
        }


def _group_stats(block: Matrix, members: list[int]) -> CondensationGroup:
    points = block[:, members]
    mean = points.mean(axis=1)
    d = block.shape[0]
    cov = covariance(points) if len(members) > 1 else np.zeros((d, d))
    return CondensationGroup(members=tuple(members), mean=mean, covariance=cov)


def _form_groups(block: Matrix, k: int) -> list[list[int]]:
    """
    Greedy nearest-neighbour accretion: the lowest unassigned index gathers
    its k-1 nearest unassigned neighbours; a remainder smaller than k joins
    the last group.
    """
    n = block.shape[1]
    unassigned = list(range(n))
    groups: list[list[int]] = []
    while len(unassigned) >= k:
        seed = unassigned[0]
        candidates = np.asarray(unassigned)
        distances = np.linalg.norm(block[:, candidates] - block[:, [seed]], axis=0)
        nearest = candidates[np.argsort(distances, kind="stable")[:k]]
        group = sorted(int(i) for i in nearest)
        groups.append(group)
        taken = set(group)
        unassigned = [i for i in unassigned if i not in taken]
    if unassigned:
        groups[-1] = sorted(groups[-1] + unassigned)
    return groups


def _regenerate(group: CondensationGroup, rng: Rng) -> Matrix:
    """
    Synthetic records whose sample mean and covariance equal the group's.

    Draws from N(mean, covariance) through its eigen-decomposition, then
    re-standardizes the draw: its centered coordinates along the retained
    eigenvectors are orthonormalized and rescaled by the eigenvalues.
    """
    g = group.size
    d = group.mean.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(group.covariance)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]

    top = eigenvalues[0] if d else 0.0
    rank = int(np.sum(eigenvalues > _RANK_TOL * max(top, 1e-300))) if top > 0 else 0
    rank = min(rank, g - 1)
    if rank == 0:
        return np.repeat(group.mean[:, None], g, axis=1)

    generator = rng.generator()
    draw = generator.standard_normal((g, d)) * np.sqrt(eigenvalues) @ eigenvectors.T
    draw += group.mean

    scale = np.sqrt(eigenvalues[:rank])
    coords = (draw - draw.mean(axis=0)) @ eigenvectors[:, :rank] / scale
    q, _ = np.linalg.qr(coords)
    synthetic = group.mean + np.sqrt(g - 1) * (q * scale) @ eigenvectors[:, :rank].T
    return synthetic.T


def condense(
    dataset: Dataset, K: int, rng: Rng  # noqa: N803
) -> tuple[Dataset, CondensationGroups]:
    """
    Replace records by synthetic ones regenerated from per-group statistics.

    Records are grouped by nearest-neighbour accretion into groups of K
    (the last absorbs the remainder). Each synthetic record takes the position
    of a member of its group, so row i of the output comes from row i's group.
    """
    dataset.require_numeric("condensation")
    n = dataset.n_records
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if K > n:
        raise ParameterError(f"K={K} exceeds the {n} records")

    block = np.asarray(dataset.numeric)
    groups = tuple(_group_stats(block, members) for members in _form_groups(block, K))

    synthetic = np.empty_like(block)
    for index, group in enumerate(groups):
        synthetic[:, list(group.members)] = _regenerate(group, rng.child(f"group{index}"))

    logger.info("condensed %d records into %d groups (K=%d)", n, len(groups), K)
    return dataset.with_numeric(synthetic), CondensationGroups(group_size=K, groups=groups)


def _rotation_for(d: int, rng: Rng, rotation: Matrix | None) -> Matrix:
    if rotation is None:
        return random_orthonormal(d, rng.child("R"))
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (d, d):
        raise ParameterError(f"rotation must be {d}x{d}, got {r.shape}")
    return r


def rotate(
    dataset: Dataset, rng: Rng, *, rotation: Matrix | None = None
) -> tuple[Dataset, Matrix]:
    """
    G(X) = R X with R a random orthonormal matrix.

    `rotation` overrides the sampled R (tests pass the identity).
    """
    dataset.require_numeric("random rotation")
    d = dataset.numeric.shape[0]
    if d < 1:
        raise ParameterError("random rotation needs at least one numeric column")
    r = _rotation_for(d, rng, rotation)
    return dataset.with_numeric(r @ dataset.numeric), r


def geometric_perturb(
    dataset: Dataset,
    sigma: float,
    rng: Rng,
    *,
    rotation: Matrix | None = None,
    translation: npt.ArrayLike | None = None,
) -> tuple[Dataset, GeometricSecret]:
    """
    G(X) = R X + t 1^T + Delta, Delta_ij ~ N(0, sigma^2), t_i ~ U(0, 1).

    `rotation` and `translation` override the sampled R and t.
    """
    dataset.require_numeric("geometric perturbation")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    d, n = dataset.numeric.shape
    if d < 1:
        raise ParameterError("geometric perturbation needs at least one numeric column")

    r = _rotation_for(d, rng, rotation)
    if translation is None:
        t = rng.child("t").generator().uniform(0.0, 1.0, size=d)
    else:
        t = np.asarray(translation, dtype=np.float64).reshape(d)

    perturbed = r @ dataset.numeric + t[:, None]
    if sigma > 0:
        perturbed = perturbed + rng.child("noise").generator().normal(0.0, sigma, size=(d, n))
    secret = GeometricSecret(rotation=r, translation=t, sigma=float(sigma))
    return dataset.with_numeric(perturbed), secret
