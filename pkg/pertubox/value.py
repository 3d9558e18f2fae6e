"""
Value-based perturbation: additive noise with distribution reconstruction,
and randomized response for boolean and categorical columns.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
import numpy.typing as npt
from scipy import stats

from pertubox.dataset import ColumnKind, Dataset
from pertubox.errors import DegenerateInputError, NonIdentifiableError, ParameterError
from pertubox.linalg import Rng

logger = logging.getLogger(__name__)

DEFAULT_BINS = 100
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 500

NoiseFamily = Literal["gaussian", "uniform"]


@dataclass(frozen=True)
class NoiseSpec:
    """
    Zero-mean additive noise Y.

    gaussian: N(0, scale^2). uniform: U(-scale, scale).
    """

    family: NoiseFamily
    scale: float

    def __post_init__(self) -> None:
        if self.family not in ("gaussian", "uniform"):
            raise ParameterError(f"unknown noise family '{self.family}'")
        if not self.scale > 0:
            raise ParameterError(f"noise variance must be positive (scale={self.scale})")

    @classmethod
    def gaussian(cls, std: float) -> "NoiseSpec":
        return cls("gaussian", std)

    @classmethod
    def uniform(cls, half_width: float) -> "NoiseSpec":
        return cls("uniform", half_width)

    @property
    def distribution(self) -> Any:
        if self.family == "gaussian":
            return stats.norm(loc=0.0, scale=self.scale)
        return stats.uniform(loc=-self.scale, scale=2.0 * self.scale)

    def pdf(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        return np.asarray(self.distribution.pdf(x), dtype=np.float64)

    def cdf(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        return np.asarray(self.distribution.cdf(x), dtype=np.float64)

    @property
    def variance(self) -> float:
        if self.family == "gaussian":
            return self.scale**2
        return self.scale**2 / 3.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    @property
    def margin(self) -> float:
        """Half-width added on each side of the reconstruction support."""
        return 3.0 * self.scale if self.family == "gaussian" else self.scale

    def sample(self, generator: np.random.Generator, n: int) -> npt.NDArray[np.float64]:
        if self.family == "gaussian":
            return generator.normal(0.0, self.scale, size=n)
        return generator.uniform(-self.scale, self.scale, size=n)

    def to_dict(self) -> dict[str, object]:
        return {"family": self.family, "scale": self.scale}


@dataclass(frozen=True)
class DensityEstimate:
    """Binned probability density over [bin_edges[0], bin_edges[-1]]."""

    bin_edges: npt.NDArray[np.float64]
    probabilities: npt.NDArray[np.float64]
    iterations: int = 0
    converged: bool = True

    @property
    def support(self) -> tuple[float, float]:
        return float(self.bin_edges[0]), float(self.bin_edges[-1])

    @property
    def centers(self) -> npt.NDArray[np.float64]:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2.0

    @property
    def widths(self) -> npt.NDArray[np.float64]:
        return np.diff(self.bin_edges)

    @property
    def density(self) -> npt.NDArray[np.float64]:
        return self.probabilities / self.widths

    def cdf(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Piecewise-linear distribution function."""
        cumulative = np.concatenate([[0.0], np.cumsum(self.probabilities)])
        return np.interp(x, self.bin_edges, cumulative)

    def l1_distance(self, probabilities: npt.ArrayLike) -> float:
        """L1 distance to another density given as probabilities on the same bins."""
        return float(np.abs(self.probabilities - np.asarray(probabilities)).sum())

    def to_dict(self) -> dict[str, object]:
        return {
            "bin_edges": [float(e) for e in self.bin_edges],
            "probabilities": [float(p) for p in self.probabilities],
            "iterations": self.iterations,
            "converged": self.converged,
        }


def add_noise(column: npt.ArrayLike, noise: NoiseSpec, rng: Rng) -> npt.NDArray[np.float64]:
    """w_i = x_i + y_i with y_i drawn independently from `noise`."""
    values = np.asarray(column, dtype=np.float64)
    if values.size < 1:
        raise ParameterError("add_noise needs at least one value")
    return values + noise.sample(rng.generator(), values.size)


def perturb_dataset_with_noise(
    dataset: Dataset,
    noise: NoiseSpec,
    rng: Rng,
    columns: Sequence[str] | None = None,
) -> Dataset:
    """Add noise to the named numeric columns (all numeric columns by default)."""
    names = dataset.schema.numeric_names
    targets = list(columns) if columns else names
    for name in targets:
        if name not in names:
            raise ParameterError(f"column '{name}' is not numeric")
    block = dataset.numeric.copy()
    for name in targets:
        row = names.index(name)
        block[row] = add_noise(block[row], noise, rng.child(name))
    return dataset.with_numeric(block)


def _kernel(
    perturbed: npt.NDArray[np.float64], edges: npt.NDArray[np.float64], noise: NoiseSpec
) -> npt.NDArray[np.float64]:
    # P(w_i - X in bin b) = F_Y(w_i - e_b) - F_Y(w_i - e_{b+1})
    upper = noise.cdf(perturbed[:, None] - edges[None, :-1])
    lower = noise.cdf(perturbed[:, None] - edges[None, 1:])
    return np.clip(upper - lower, 0.0, None)


def reconstruct_distribution(
    perturbed: npt.ArrayLike,
    noise: NoiseSpec,
    bins: int = DEFAULT_BINS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DensityEstimate:
    """
    Estimate the density of X from w = X + Y by iterating Bayes' rule.

    Starting from a normal density with the moment-corrected mean and variance
    of w, each step replaces the bin probabilities by the average posterior
    mass the observations put on each bin. Stops when the L1 change between
    iterates falls below `tol` or after `max_iter` steps; the result is flagged
    `converged=False` in the latter case.
    """
    w = np.asarray(perturbed, dtype=np.float64)
    if w.size < 10:
        raise ParameterError(f"reconstruction needs at least 10 values, got {w.size}")
    if bins < 2:
        raise ParameterError(f"bins must be >= 2, got {bins}")

    lo = float(w.min()) - noise.margin
    span = float(w.max() - w.min()) + 2.0 * noise.margin
    # Work relative to the support so shifted data gives the same iterates.
    offset = (w - w.min()) + noise.margin
    relative_edges = np.linspace(0.0, span, bins + 1)
    relative_centers = (relative_edges[:-1] + relative_edges[1:]) / 2.0
    edges = lo + relative_edges

    kernel = _kernel(offset, relative_edges, noise)
    usable = kernel.sum(axis=1) > 0
    if not usable.any():
        raise DegenerateInputError("no perturbed value is reachable under the noise model")
    if not usable.all():
        logger.warning("dropping %d values with zero likelihood", int((~usable).sum()))
        kernel = kernel[usable]

    spread = float(w.max() - w.min()) or span
    variance = max(float(offset.var(ddof=1)) - noise.variance, 1e-6 * spread**2)
    prior = stats.norm.pdf(
        relative_centers, loc=float(offset.mean()), scale=np.sqrt(variance)
    )
    if prior.sum() <= 0:
        prior = np.ones(bins)
    probabilities = prior / prior.sum()

    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        weighted = kernel * probabilities
        evidence = weighted.sum(axis=1, keepdims=True)
        evidence[evidence == 0] = 1.0
        updated = (weighted / evidence).mean(axis=0)
        updated /= updated.sum()
        change = float(np.abs(updated - probabilities).sum())
        probabilities = updated
        if change < tol:
            converged = True
            break

    logger.info(
        "reconstruction %s after %d iterations",
        "converged" if converged else "stopped without converging",
        iteration,
    )
    return DensityEstimate(
        bin_edges=edges, probabilities=probabilities, iterations=iteration, converged=converged
    )


def _reconstruct_column(
    values: npt.NDArray[np.float64], noise: NoiseSpec, bins: int, tol: float, max_iter: int
) -> DensityEstimate:
    return reconstruct_distribution(values, noise, bins=bins, tol=tol, max_iter=max_iter)


def reconstruct_columns(
    dataset: Dataset,
    noise: NoiseSpec,
    columns: Sequence[str] | None = None,
    bins: int = DEFAULT_BINS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    parallel: bool = True,
    max_workers: int | None = None,
) -> dict[str, DensityEstimate]:
    """
    Reconstruct several numeric columns, one worker process per column.

    Columns whose worker failed are retried sequentially. The result is keyed
    by column name in the requested order, whatever order workers finish in.
    """
    names = list(columns) if columns else dataset.schema.numeric_names
    for name in names:
        if dataset.schema.column(name).kind != ColumnKind.NUMERIC:
            raise ParameterError(f"column '{name}' is not numeric")

    results: dict[str, DensityEstimate] = {}
    failed: list[str] = []
    if parallel and len(names) > 1:
        workers = max_workers or min(len(names), 8)
        try:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = {
                    executor.submit(
                        _reconstruct_column,
                        np.asarray(dataset.column(name)), noise, bins, tol, max_iter,
                    ): name
                    for name in names
                }
                for future in as_completed(futures):
                    name = futures[future]
                    try:
                        results[name] = future.result()
                    except Exception as e:
                        logger.warning("column %s failed in process pool: %s", name, e)
                        failed.append(name)
        except OSError as e:
            logger.warning("process pool unavailable (%s); running sequentially", e)
            failed = [n for n in names if n not in results]
    else:
        failed = names

    for name in failed:
        results[name] = _reconstruct_column(
            np.asarray(dataset.column(name)), noise, bins, tol, max_iter
        )
    return {name: results[name] for name in names}


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f"theta must be in [0, 1], got {theta}")


def randomize_response(
    column: npt.ArrayLike, theta: float, rng: Rng
) -> npt.NDArray[np.bool_]:
    """Keep each answer with probability theta, report its negation otherwise."""
    _check_theta(theta)
    answers = np.asarray(column, dtype=bool)
    if answers.size < 1:
        raise ParameterError("randomize_response needs at least one value")
    keep = rng.generator().random(answers.size) < theta
    return np.where(keep, answers, ~answers)


@dataclass(frozen=True)
class ProportionEstimate:
    estimate: float
    standard_error: float
    observed: float
    clamped: bool

    def to_dict(self) -> dict[str, object]:
        return {
            "estimate": self.estimate,
            "standard_error": self.standard_error,
            "observed": self.observed,
            "clamped": self.clamped,
        }


def estimate_true_proportion(scrambled: npt.ArrayLike, theta: float) -> ProportionEstimate:
    """
    Invert P*(yes) = theta * P(yes) + (1 - theta) * (1 - P(yes)).

    Estimates outside [0, 1] are clamped and flagged.
    """
    _check_theta(theta)
    if theta == 0.5:
        raise NonIdentifiableError("theta=0.5 non-identifiable")
    answers = np.asarray(scrambled, dtype=bool)
    n = answers.size
    if n < 1:
        raise ParameterError("estimate_true_proportion needs at least one value")

    observed = float(answers.mean())
    raw = (observed - (1.0 - theta)) / (2.0 * theta - 1.0)
    estimate = min(max(raw, 0.0), 1.0)
    clamped = estimate != raw
    if clamped:
        logger.warning("proportion estimate %.4f clamped to [0, 1]", raw)
    standard_error = float(np.sqrt(observed * (1.0 - observed) / n) / abs(2.0 * theta - 1.0))
    return ProportionEstimate(
        estimate=estimate, standard_error=standard_error, observed=observed, clamped=clamped
    )


def randomize_categories(
    column: Sequence[str], categories: Sequence[str], theta: float, rng: Rng
) -> list[str]:
    """
    Keep each label with probability theta; otherwise report a different
    label drawn uniformly from the rest of the domain.
    """
    _check_theta(theta)
    domain = list(dict.fromkeys(categories))
    if len(domain) < 2:
        raise ParameterError("categorical randomized response needs at least 2 categories")
    index = {c: i for i, c in enumerate(domain)}
    try:
        codes = np.array([index[v] for v in column], dtype=np.intp)
    except KeyError as e:
        raise ParameterError(f"label {e.args[0]!r} is not in the category domain") from None

    generator = rng.generator()
    keep = generator.random(codes.size) < theta
    # Offset in 1..m-1 lands on a uniformly chosen different category.
    offsets = generator.integers(1, len(domain), size=codes.size)
    reported = np.where(keep, codes, (codes + offsets) % len(domain))
    return [domain[i] for i in reported]


@dataclass(frozen=True)
class CategoryEstimate:
    categories: tuple[str, ...]
    estimates: tuple[float, ...]
    standard_errors: tuple[float, ...]
    clamped: bool

    def to_dict(self) -> dict[str, object]:
        return {
            "categories": list(self.categories),
            "estimates": list(self.estimates),
            "standard_errors": list(self.standard_errors),
            "clamped": self.clamped,
        }


def estimate_category_distribution(
    scrambled: Sequence[str], categories: Sequence[str], theta: float
) -> CategoryEstimate:
    """Invert the categorical model: p(c) = (P*(c)(m-1) - (1-theta)) / (theta m - 1)."""
    _check_theta(theta)
    domain = list(dict.fromkeys(categories))
    m = len(domain)
    if m < 2:
        raise ParameterError("categorical randomized response needs at least 2 categories")
    denominator = theta * m - 1.0
    if abs(denominator) < 1e-12:
        raise NonIdentifiableError(f"theta={theta} non-identifiable for {m} categories")
    n = len(scrambled)
    if n < 1:
        raise ParameterError("estimate_category_distribution needs at least one value")

    observed = np.array([sum(1 for v in scrambled if v == c) / n for c in domain])
    raw = (observed * (m - 1) - (1.0 - theta)) / denominator
    clipped = np.clip(raw, 0.0, None)
    clamped = bool(np.any(raw < 0) or np.any(raw > 1))
    total = clipped.sum()
    estimates = clipped / total if total > 0 else np.full(m, 1.0 / m)
    errors = np.sqrt(observed * (1 - observed) / n) * (m - 1) / abs(denominator)
    return CategoryEstimate(
        categories=tuple(domain),
        estimates=tuple(float(e) for e in estimates),
        standard_errors=tuple(float(e) for e in errors),
        clamped=clamped,
    )


def randomize_dataset(
    dataset: Dataset, theta: float, rng: Rng, columns: Sequence[str] | None = None
) -> Dataset:
    """
    Randomized response on boolean and categorical columns (all of them by
    default); categorical domains are the sorted observed labels.
    """
    names = list(columns) if columns else dataset.schema.label_names
    updates: dict[str, list[str]] = {}
    for name in names:
        kind = dataset.schema.column(name).kind
        if kind == ColumnKind.BOOLEAN:
            flipped = randomize_response(dataset.boolean_column(name), theta, rng.child(name))
            updates[name] = ["true" if v else "false" for v in flipped]
        elif kind == ColumnKind.CATEGORICAL:
            values = dataset.labels[name]
            categories = sorted(set(values))
            updates[name] = randomize_categories(values, categories, theta, rng.child(name))
        else:
            raise ParameterError(f"column '{name}' is numeric; use noise addition instead")
    return dataset.with_labels(updates)
