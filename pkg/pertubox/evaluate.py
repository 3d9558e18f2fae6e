"""
Privacy-loss and information-loss metrics for an (original, modified) pair,
plus per-technique checks of the property each technique claims to preserve.

Metrics that need aligned data are None when the pair does not line up:
value-level metrics need the same numeric columns and record count, column
statistics need the same columns, distance metrics need the same records.
"""

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import stats

from pertubox.anonymize import (
    AnonymizedTable,
    check_k_anonymity,
    check_l_diversity,
    check_t_closeness,
)
from pertubox.dataset import ColumnKind, ColumnRole, Dataset
from pertubox.errors import PertuboxError
from pertubox.linalg import Matrix, Rng, covariance, svd
from pertubox.registry import TECHNIQUE_IDS, resolve_technique
from pertubox.value import (
    NoiseSpec,
    estimate_category_distribution,
    estimate_true_proportion,
    reconstruct_distribution,
)

logger = logging.getLogger(__name__)

MAX_DISTANCE_PAIRS = 500
ISOMETRY_TOL = 1e-9
MOMENT_TOL = 1e-6
ECKART_YOUNG_TOL = 1e-8
JL_BAND = 0.3
JL_FRACTION = 0.9
STANDARD_ERRORS = 4.0


@dataclass(frozen=True)
class EvaluationReport:
    """Metric values for one (original, modified) pair."""

    technique: str
    shapes_comparable: bool
    compared_columns: tuple[str, ...]
    value_difference: float | None = None
    rank_position_change: float | None = None
    attribute_rank_change: float | None = None
    covariance_error: float | None = None
    distance_distortion: float | None = None
    per_column_ks: float | None = None
    preserved_property_verdicts: dict[str, bool] = field(default_factory=dict)
    technique_metrics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "technique": self.technique,
            "shapes_comparable": self.shapes_comparable,
            "compared_columns": list(self.compared_columns),
            "privacy_loss": {
                "value_difference": self.value_difference,
                "rank_position_change": self.rank_position_change,
                "attribute_rank_change": self.attribute_rank_change,
            },
            "information_loss": {
                "covariance_error": self.covariance_error,
                "distance_distortion": self.distance_distortion,
                "per_column_ks": self.per_column_ks,
            },
            "preserved_property_verdicts": dict(sorted(self.preserved_property_verdicts.items())),
            "technique_metrics": dict(sorted(self.technique_metrics.items())),
        }


@dataclass(frozen=True)
class _Pair:
    """Aligned views of the two datasets handed to the technique checks."""

    original: Dataset
    modified: Dataset
    columns: tuple[str, ...]
    x: Matrix | None
    x_hat: Matrix | None
    pairs: tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]] | None
    params: Mapping[str, Any]

    @property
    def aligned(self) -> bool:
        return self.x is not None and self.x_hat is not None


def _records(dataset: Dataset, names: tuple[str, ...]) -> Matrix:
    rows = [dataset.schema.numeric_names.index(name) for name in names]
    return np.asarray(dataset.numeric[rows].T)


def _relative_frobenius(reference: Matrix, other: Matrix) -> float:
    difference = float(np.linalg.norm(reference - other))
    scale = float(np.linalg.norm(reference))
    return difference / scale if scale > 0 else difference


def sample_pairs(n: int, rng: Rng) -> tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]:
    """
    Up to MAX_DISTANCE_PAIRS distinct record pairs (i < j), drawn without
    replacement from the n(n-1)/2 pairs in row-major upper-triangle order.
    """
    total = n * (n - 1) // 2
    count = min(MAX_DISTANCE_PAIRS, total)
    linear = np.sort(rng.generator().choice(total, size=count, replace=False))
    # Invert t = i*n - i*(i+1)/2 + (j - i - 1).
    i = (n - 2 - np.floor(np.sqrt(-8.0 * linear + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(
        np.intp
    )
    j = (linear + i + 1 - total + (n - i) * (n - i - 1) // 2).astype(np.intp)
    return i, j


def _pair_distances(
    records: Matrix, pairs: tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]
) -> npt.NDArray[np.float64]:
    i, j = pairs
    return np.linalg.norm(records[i] - records[j], axis=1)


def _relative_changes(
    before: npt.NDArray[np.float64], after: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    change = np.abs(after - before)
    return np.where(before > 0, change / np.where(before > 0, before, 1.0), change)


def _rank_position_change(x: Matrix, x_hat: Matrix) -> float:
    n = x.shape[0]
    if n < 2:
        return 0.0
    moves = [
        float(np.mean(np.abs(stats.rankdata(x[:, c]) - stats.rankdata(x_hat[:, c])))) / (n - 1)
        for c in range(x.shape[1])
    ]
    return float(np.mean(moves))


def _attribute_rank_change(x: Matrix, x_hat: Matrix) -> float:
    before = stats.rankdata(-x.var(axis=0), method="min")
    after = stats.rankdata(-x_hat.var(axis=0), method="min")
    return float(np.mean(before != after))


def _covariance_error(x: Matrix, x_hat: Matrix) -> float | None:
    if x.shape[0] < 2 or x_hat.shape[0] < 2:
        return None
    return _relative_frobenius(covariance(x.T), covariance(x_hat.T))


def _max_ks(x: Matrix, x_hat: Matrix) -> float:
    statistics = [
        float(stats.ks_2samp(x[:, c], x_hat[:, c]).statistic) for c in range(x.shape[1])
    ]
    return max(statistics) if statistics else 0.0


Checks = tuple[dict[str, bool], dict[str, float]]


def _isometry(pair: _Pair) -> Checks:
    if pair.pairs is None:
        return {}, {}
    before = _pair_distances(pair.original.records, pair.pairs)
    after = _pair_distances(pair.modified.records, pair.pairs)
    worst = float(np.max(np.abs(after - before), initial=0.0))
    scale = max(1.0, float(np.max(before, initial=0.0)))
    return {"isometry": worst <= ISOMETRY_TOL * scale}, {"max_distance_change": worst}


def _projection(pair: _Pair) -> Checks:
    if pair.pairs is None:
        return {}, {}
    before = _pair_distances(pair.original.records, pair.pairs)
    after = _pair_distances(pair.modified.records, pair.pairs)
    usable = before > 0
    if not usable.any():
        return {}, {}
    within = float(np.mean(np.abs(after[usable] / before[usable] - 1.0) <= JL_BAND))
    return {"distances_concentrated": within >= JL_FRACTION}, {"distances_within_band": within}


def _condensation(pair: _Pair) -> Checks:
    if not pair.aligned or pair.x is None or pair.x_hat is None:
        return {}, {}
    mean_shift = float(np.max(np.abs(pair.x.mean(axis=0) - pair.x_hat.mean(axis=0))))
    scale = max(1.0, float(np.max(np.abs(pair.x.mean(axis=0)))))
    error = _covariance_error(pair.x, pair.x_hat)
    verdicts = {"mean_preserved": mean_shift <= MOMENT_TOL * scale}
    if error is not None:
        verdicts["covariance_preserved"] = error <= MOMENT_TOL
    return verdicts, {"mean_shift": mean_shift}


def _eckart_young(pair: _Pair) -> Checks:
    if not pair.aligned or pair.x is None or pair.x_hat is None:
        return {}, {}
    rank = int(np.linalg.matrix_rank(pair.x_hat))
    singular_values = svd(pair.x).singular_values
    tail = float(np.sum(singular_values[rank:] ** 2))
    residual = float(np.linalg.norm(pair.x - pair.x_hat) ** 2)
    total = float(np.linalg.norm(pair.x) ** 2)
    holds = abs(residual - tail) <= ECKART_YOUNG_TOL * max(total, 1e-300)
    return {"eckart_young": holds}, {"rank": float(rank), "residual_frobenius": math.sqrt(residual)}


def _nmf(pair: _Pair) -> Checks:
    if not pair.aligned or pair.x is None or pair.x_hat is None:
        return {}, {}
    residual = float(np.linalg.norm(pair.x - pair.x_hat))
    return (
        {
            "non_negative": bool(np.all(pair.x_hat >= 0)),
            "residual_bounded": residual <= float(np.linalg.norm(pair.x)) * (1 + 1e-12),
        },
        {"residual_frobenius": residual},
    )


def _noise_reconstruction(pair: _Pair) -> Checks:
    """
    Reconstruct every column's density from the perturbed values and compare
    it, on the same bins, with the histogram of the original values. The
    reconstruction should land closer to the original than the perturbed
    histogram does.
    """
    if not pair.aligned or pair.x is None or pair.x_hat is None or pair.x.shape[0] < 10:
        return {}, {}
    family = pair.params.get("noise_family", "gaussian")
    verdicts: dict[str, bool] = {}
    metrics: dict[str, float] = {}
    for c, name in enumerate(pair.columns):
        original, perturbed = pair.x[:, c], pair.x_hat[:, c]
        scale = pair.params.get("sigma")
        if scale is None:
            scale = float(np.std(perturbed - original))
            if family == "uniform":
                scale *= math.sqrt(3.0)
        if not scale > 0:
            continue
        try:
            estimate = reconstruct_distribution(perturbed, NoiseSpec(family, float(scale)))
        except PertuboxError as e:
            logger.warning("cannot reconstruct column %s: %s", name, e)
            continue
        edges = estimate.bin_edges
        truth = np.histogram(np.clip(original, edges[0], edges[-1]), bins=edges)[0] / original.size
        naive = np.histogram(perturbed, bins=edges)[0] / perturbed.size
        reconstructed = estimate.l1_distance(truth)
        metrics[f"reconstruction_l1/{name}"] = reconstructed
        metrics[f"perturbed_l1/{name}"] = float(np.abs(naive - truth).sum())
        verdicts[f"distribution_reconstructed/{name}"] = (
            reconstructed <= metrics[f"perturbed_l1/{name}"]
        )
    return verdicts, metrics


def _randomized_response(pair: _Pair) -> Checks:
    theta = pair.params.get("theta")
    original, modified = pair.original, pair.modified
    if theta is None or original.n_records != modified.n_records:
        return {}, {}
    verdicts: dict[str, bool] = {}
    metrics: dict[str, float] = {}
    shared = [n for n in original.schema.label_names if n in modified.schema.label_names]
    for name in shared:
        kind = original.schema.column(name).kind
        if kind == ColumnKind.BOOLEAN and modified.schema.column(name).kind == kind:
            truth = float(original.boolean_column(name).mean())
            estimate = estimate_true_proportion(modified.boolean_column(name), float(theta))
            error = abs(estimate.estimate - truth)
            metrics[f"proportion_error/{name}"] = error
            verdicts[f"proportion_recovered/{name}"] = (
                error <= STANDARD_ERRORS * estimate.standard_error + 1e-12
            )
        elif kind == ColumnKind.CATEGORICAL:
            domain = sorted(set(original.labels[name]) | set(modified.labels[name]))
            if len(domain) < 2:
                continue
            categories = estimate_category_distribution(
                modified.labels[name], domain, float(theta)
            )
            values = original.labels[name]
            errors = [
                abs(p - sum(1 for v in values if v == c) / len(values))
                for c, p in zip(categories.categories, categories.estimates)
            ]
            metrics[f"proportion_error/{name}"] = max(errors)
            verdicts[f"proportion_recovered/{name}"] = all(
                e <= STANDARD_ERRORS * se + 1e-12
                for e, se in zip(errors, categories.standard_errors)
            )
    return verdicts, metrics


def _sensitive_column(dataset: Dataset, params: Mapping[str, Any]) -> str | None:
    if params.get("sensitive"):
        return str(params["sensitive"])
    sensitive = dataset.schema.with_role(ColumnRole.SENSITIVE)
    return sensitive[0].name if sensitive else None


def _anonymization(pair: _Pair) -> Checks:
    params = pair.params
    table = AnonymizedTable.from_dataset(pair.modified)
    verdicts: dict[str, bool] = {}
    metrics: dict[str, float] = {
        "equivalence_classes": float(len(table.equivalence_classes)),
        "suppressed_records": float(pair.original.n_records - pair.modified.n_records),
    }
    if table.class_sizes:
        metrics["smallest_class"] = float(min(table.class_sizes))
    if params.get("k") is not None:
        verdicts["k_anonymous"] = check_k_anonymity(table, int(params["k"])).holds
    sensitive = _sensitive_column(pair.modified, params)
    if sensitive is not None and params.get("l") is not None:
        verdicts["l_diverse"] = check_l_diversity(table, sensitive, int(params["l"])).holds
    if sensitive is not None and params.get("t") is not None:
        verdict = check_t_closeness(table, sensitive, float(params["t"]))
        verdicts["t_close"] = verdict.holds
        metrics["max_closeness_distance"] = max(verdict.distances, default=0.0)
    return verdicts, metrics


_CHECKS: dict[str, Callable[[_Pair], Checks]] = {
    "k_anonymity": _anonymization,
    "l_diversity": _anonymization,
    "t_closeness": _anonymization,
    "noise_addition": _noise_reconstruction,
    "randomized_response": _randomized_response,
    "condensation": _condensation,
    "random_rotation": _isometry,
    "geometric": _isometry,
    "random_projection": _projection,
    "nmf": _nmf,
    "svd": _eckart_young,
}

if set(_CHECKS) != set(TECHNIQUE_IDS):
    raise RuntimeError(
        f"technique checks {sorted(_CHECKS)} do not match the registry {sorted(TECHNIQUE_IDS)}"
    )


def evaluate_pair(
    original: Dataset,
    modified: Dataset,
    technique: str,
    params: Mapping[str, Any] | None = None,
    seed: int = 0,
) -> EvaluationReport:
    """
    Compare a modified dataset against its original.

    params carries technique parameters (k, l, t, sensitive, theta, sigma,
    noise_family) needed by the preserved-property checks; checks whose
    parameters are missing are left out of the report. seed fixes the
    record pairs sampled for distance distortion.
    """
    technique_id = resolve_technique(technique)
    params = dict(params or {})

    modified_numeric = set(modified.schema.numeric_names)
    columns = tuple(n for n in original.schema.numeric_names if n in modified_numeric)
    same_n = original.n_records == modified.n_records
    comparable = (
        bool(columns)
        and same_n
        and len(columns) == len(original.schema.numeric_names) == len(modified_numeric)
    )

    x = _records(original, columns) if columns and same_n else None
    x_hat = _records(modified, columns) if columns and same_n else None

    pairs = None
    distance_distortion = None
    n = original.n_records
    if same_n and n >= 2 and original.schema.numeric_names and modified.schema.numeric_names:
        pairs = sample_pairs(n, Rng(seed).child("evaluate").child("pairs"))
        before = _pair_distances(original.records, pairs)
        after = _pair_distances(modified.records, pairs)
        distance_distortion = float(np.mean(_relative_changes(before, after)))

    value_difference = rank_change = None
    if x is not None and x_hat is not None:
        value_difference = _relative_frobenius(x, x_hat)
        rank_change = _rank_position_change(x, x_hat)

    attribute_rank_change = covariance_error = ks = None
    if columns:
        x_all, x_hat_all = _records(original, columns), _records(modified, columns)
        if x_all.shape[0] and x_hat_all.shape[0]:
            attribute_rank_change = _attribute_rank_change(x_all, x_hat_all)
            ks = _max_ks(x_all, x_hat_all)
        covariance_error = _covariance_error(x_all, x_hat_all)

    pair = _Pair(
        original=original,
        modified=modified,
        columns=columns,
        x=x,
        x_hat=x_hat,
        pairs=pairs,
        params=params,
    )
    verdicts, metrics = _CHECKS[technique_id](pair)
    logger.info("evaluated %s: %d verdicts", technique_id, len(verdicts))

    return EvaluationReport(
        technique=technique_id,
        shapes_comparable=comparable,
        compared_columns=columns,
        value_difference=value_difference,
        rank_position_change=rank_change,
        attribute_rank_change=attribute_rank_change,
        covariance_error=covariance_error,
        distance_distortion=distance_distortion,
        per_column_ks=ks,
        preserved_property_verdicts=verdicts,
        technique_metrics=metrics,
    )
