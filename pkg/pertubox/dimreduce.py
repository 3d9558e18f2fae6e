"""
Dimension-reduction perturbation: random projection, rank-k SVD distortion
and non-negative matrix factorization distortion.

These techniques work on the record-major matrix A (records x attributes),
the transpose of the Dataset's numeric block.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt

from pertubox.dataset import ColumnKind, ColumnSpec, Dataset, Schema
from pertubox.errors import ParameterError
from pertubox.linalg import Matrix, Rng, svd

logger = logging.getLogger(__name__)

DEFAULT_NMF_MAX_ITER = 500
DEFAULT_NMF_TOL = 1e-6
_DENOMINATOR_FLOOR = 1e-12


class ProjectionAxis(str, Enum):
    COLUMN_WISE = "column_wise"
    ROW_WISE = "row_wise"


@dataclass(frozen=True)
class ProjectionSpec:
    """
    Random projection parameters.

    column_wise projects the attributes of every record onto k random
    directions (A R, R is d x k). row_wise mixes records instead (R' A,
    R' is k x n). Entries of R are N(0, entry_std^2).
    """

    k: int
    axis: ProjectionAxis = ProjectionAxis.COLUMN_WISE
    entry_std: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", ProjectionAxis(self.axis))
        if self.k < 1:
            raise ParameterError(f"projection k must be >= 1, got {self.k}")
        if not self.entry_std > 0:
            raise ParameterError(f"entry_std must be > 0, got {self.entry_std}")

    def source_dim(self, dataset: Dataset) -> int:
        """Size of the dimension projected away."""
        d, n = dataset.numeric.shape
        return d if self.axis == ProjectionAxis.COLUMN_WISE else n

    def to_dict(self) -> dict[str, object]:
        return {"k": self.k, "axis": self.axis.value, "entry_std": self.entry_std}


def projection_matrix(spec: ProjectionSpec, source_dim: int, rng: Rng) -> Matrix:
    """R (source_dim x k for column-wise, k x source_dim for row-wise)."""
    generator = rng.child("R").generator()
    r = generator.normal(0.0, spec.entry_std, size=(source_dim, spec.k))
    return r if spec.axis == ProjectionAxis.COLUMN_WISE else np.ascontiguousarray(r.T)


def projected_schema(k: int) -> Schema:
    columns = tuple(ColumnSpec(name=f"p{i}", kind=ColumnKind.NUMERIC) for i in range(k))
    return Schema(columns=columns)


def random_project(dataset: Dataset, spec: ProjectionSpec, rng: Rng) -> Dataset:
    """
    (1 / (sqrt(k) entry_std)) A R, or (1 / (sqrt(k) entry_std)) R' A row-wise.

    Only the projected block is kept: column-wise output has columns p0..p{k-1};
    row-wise output keeps the schema and has k records.
    """
    dataset.require_numeric("random projection")
    source = spec.source_dim(dataset)
    if spec.k >= source:
        dimension = "attributes" if spec.axis == ProjectionAxis.COLUMN_WISE else "records"
        raise ParameterError(f"projection k={spec.k} must be < {source} {dimension}")

    r = projection_matrix(spec, source, rng)
    scale = 1.0 / (np.sqrt(spec.k) * spec.entry_std)
    a = dataset.records
    if spec.axis == ProjectionAxis.COLUMN_WISE:
        projected = scale * (a @ r)
        return Dataset(schema=projected_schema(spec.k), numeric=projected.T)
    projected = scale * (r @ a)
    return Dataset(schema=dataset.schema, numeric=projected.T)


@dataclass(frozen=True)
class FactorizationResult:
    """
    A low-rank approximation of A and its factors.

    SVD: left = U_k, singular_values = diag(Sigma_k), right = V_k^T.
    NMF: left = W (n x k), right = H (k x m), singular_values is None.
    residual_frobenius is ||A - approximation||_F, the noise E_k removed.
    """

    method: str
    rank: int
    left: Matrix
    right: Matrix
    approximation: Matrix
    residual_frobenius: float
    singular_values: npt.NDArray[np.float64] | None = None
    objective_trace: tuple[float, ...] = field(default_factory=tuple)
    iterations: int = 0
    converged: bool = True

    def to_dict(self, include_factors: bool = False) -> dict[str, object]:
        data: dict[str, object] = {
            "method": self.method,
            "rank": self.rank,
            "residual_frobenius": self.residual_frobenius,
        }
        if self.method == "nmf":
            data["iterations"] = self.iterations
            data["converged"] = self.converged
            data["objective_trace"] = list(self.objective_trace)
        if include_factors:
            data["left"] = self.left.tolist()
            data["right"] = self.right.tolist()
            if self.singular_values is not None:
                data["singular_values"] = self.singular_values.tolist()
        return data


def _check_rank(k: int, a: Matrix, technique: str) -> None:
    limit = min(a.shape)
    if not 1 <= k <= limit:
        raise ParameterError(f"{technique} rank k={k} must be in [1, {limit}]")


def svd_distort(dataset: Dataset, k: int) -> tuple[Dataset, FactorizationResult]:
    """Replace A by its best rank-k approximation A_k = U_k Sigma_k V_k^T."""
    dataset.require_numeric("SVD distortion")
    a = dataset.records
    _check_rank(k, a, "SVD")

    decomposition = svd(a)
    approximation = decomposition.reconstruct(k)
    residual = float(np.linalg.norm(a - approximation))
    logger.info("SVD rank %d: residual %.6g", k, residual)

    result = FactorizationResult(
        method="svd",
        rank=k,
        left=decomposition.U[:, :k],
        right=decomposition.Vt[:k, :],
        approximation=approximation,
        residual_frobenius=residual,
        singular_values=decomposition.singular_values[:k].copy(),
    )
    return dataset.with_numeric(approximation.T), result


def _objective(a: Matrix, w: Matrix, h: Matrix) -> float:
    return 0.5 * float(np.linalg.norm(a - w @ h) ** 2)


def nmf_distort(
    dataset: Dataset,
    k: int,
    rng: Rng,
    max_iter: int = DEFAULT_NMF_MAX_ITER,
    tol: float = DEFAULT_NMF_TOL,
) -> tuple[Dataset, FactorizationResult]:
    """
    Replace A by W H, found with Lee-Seung multiplicative updates minimizing
    0.5 ||A - W H||_F^2.

    objective_trace starts with the objective of the initial factors and
    grows by one value per iteration. Iteration stops once the relative
    decrease falls below tol; otherwise after max_iter rounds with
    converged=False.
    """
    dataset.require_numeric("NMF distortion")
    a = dataset.records
    _check_rank(k, a, "NMF")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    if tol < 0:
        raise ParameterError(f"tol must be >= 0, got {tol}")
    negative = np.argwhere(a < 0)
    if negative.size:
        row, col = (int(v) for v in negative[0])
        name = dataset.schema.numeric_names[col]
        raise ParameterError(
            f"NMF needs non-negative data; record {row}, column '{name}' is {float(a[row, col])}"
        )

    n, m = a.shape
    scale = np.sqrt(a.mean() / k)
    w = rng.child("W").generator().uniform(0.0, 1.0, size=(n, k)) * scale
    h = rng.child("H").generator().uniform(0.0, 1.0, size=(k, m)) * scale

    trace = [_objective(a, w, h)]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        h = h * (w.T @ a) / np.maximum(w.T @ w @ h, _DENOMINATOR_FLOOR)
        w = w * (a @ h.T) / np.maximum(w @ (h @ h.T), _DENOMINATOR_FLOOR)
        current = _objective(a, w, h)
        previous = trace[-1]
        trace.append(current)
        if previous == 0.0 or (previous - current) / previous < tol:
            converged = True
            break
        logger.debug("NMF iteration %d: objective %.10g", iterations, current)

    if not converged:
        logger.info("NMF stopped at max_iter=%d (objective %.6g)", max_iter, trace[-1])

    approximation = w @ h
    result = FactorizationResult(
        method="nmf",
        rank=k,
        left=w,
        right=h,
        approximation=approximation,
        residual_frobenius=float(np.linalg.norm(a - approximation)),
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )
    return dataset.with_numeric(approximation.T), result
