"""
Unit tests for random projection, SVD distortion and NMF distortion.
"""

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from pertubox.dataset import Dataset, Schema
from pertubox.dimreduce import (
    ProjectionAxis,
    ProjectionSpec,
    nmf_distort,
    random_project,
    svd_distort,
)
from pertubox.errors import ParameterError
from pertubox.linalg import Rng


def _from_records(a: np.ndarray) -> Dataset:
    """Dataset whose records are the rows of `a`."""
    schema = Schema.from_dict(
        {"columns": [{"name": f"x{i}", "kind": "numeric"} for i in range(a.shape[1])]}
    )
    return Dataset(schema=schema, numeric=np.asarray(a, dtype=float).T)


def test_projection_column_wise_shape_and_schema():
    """Test that records keep their count and get k new attributes."""
    dataset = _from_records(np.random.default_rng(0).normal(size=(30, 10)))
    projected = random_project(dataset, ProjectionSpec(k=4), Rng(0))
    assert projected.records.shape == (30, 4)
    assert projected.schema.names == ["p0", "p1", "p2", "p3"]


def test_projection_row_wise_keeps_schema():
    """Test that row-wise projection keeps the attributes and outputs k records."""
    dataset = _from_records(np.random.default_rng(1).normal(size=(30, 3)))
    projected = random_project(dataset, ProjectionSpec(k=6, axis="row_wise"), Rng(1))
    assert projected.records.shape == (6, 3)
    assert projected.schema == dataset.schema


def test_projection_k_range():
    """Test k in [1, source dimension)."""
    dataset = _from_records(np.ones((5, 3)))
    with pytest.raises(ParameterError, match="k must be >= 1"):
        ProjectionSpec(k=0)
    with pytest.raises(ParameterError, match="k=3 must be < 3 attributes"):
        random_project(dataset, ProjectionSpec(k=3), Rng(0))
    with pytest.raises(ParameterError, match="k=5 must be < 5 records"):
        random_project(dataset, ProjectionSpec(k=5, axis=ProjectionAxis.ROW_WISE), Rng(0))
    with pytest.raises(ParameterError, match="entry_std"):
        ProjectionSpec(k=1, entry_std=0.0)


def test_projection_is_deterministic_and_scaled():
    """Test seeding and that entry_std does not change the expected geometry."""
    dataset = _from_records(np.random.default_rng(2).normal(size=(8, 12)))
    a = random_project(dataset, ProjectionSpec(k=3), Rng(5))
    b = random_project(dataset, ProjectionSpec(k=3), Rng(5))
    c = random_project(dataset, ProjectionSpec(k=3, entry_std=4.0), Rng(5))
    np.testing.assert_array_equal(a.numeric, b.numeric)
    np.testing.assert_allclose(c.numeric, a.numeric, atol=1e-12)


def test_projection_inner_products_are_unbiased():
    """Test the mean projected inner product over 2000 projections, d=20, k=5."""
    generator = np.random.default_rng(3)
    dataset = _from_records(generator.normal(size=(2, 20)))
    x, y = dataset.records
    truth = float(x @ y)
    values = np.empty(2000)
    for i in range(values.size):
        projected = random_project(dataset, ProjectionSpec(k=5), Rng(i)).records
        values[i] = projected[0] @ projected[1]
    standard_error = values.std(ddof=1) / np.sqrt(values.size)
    assert abs(values.mean() - truth) <= 3 * standard_error


def test_projection_distance_concentration():
    """Test that n=200 points in d=100 projected to k=50 keep distances within 30%."""
    dataset = _from_records(np.random.default_rng(4).normal(size=(200, 100)))
    projected = random_project(dataset, ProjectionSpec(k=50), Rng(4))
    ratio = pdist(projected.records) / pdist(dataset.records)
    assert np.mean(np.abs(ratio - 1.0) <= 0.3) >= 0.9
    assert np.mean(np.abs(ratio**2 - 1.0) <= 0.3) >= 0.8


def test_svd_distort_diagonal():
    """Test that diag(3, 2, 1) at k=2 drops exactly the last singular value."""
    distorted, result = svd_distort(_from_records(np.diag([3.0, 2.0, 1.0])), 2)
    assert result.residual_frobenius == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(distorted.records, np.diag([3.0, 2.0, 0.0]), atol=1e-10)
    np.testing.assert_allclose(result.singular_values, [3.0, 2.0], atol=1e-12)


def test_svd_distort_eckart_young():
    """Test that the residual equals the discarded singular values for each k."""
    a = np.random.default_rng(5).normal(size=(12, 6))
    sigma = np.linalg.svd(a, compute_uv=False)
    for k in range(1, 7):
        distorted, result = svd_distort(_from_records(a), k)
        expected = float(np.sum(sigma[k:] ** 2))
        assert result.residual_frobenius**2 == pytest.approx(expected, rel=1e-8, abs=1e-12)
        assert np.linalg.matrix_rank(distorted.records, tol=1e-8) <= k


def test_svd_distort_eckart_young_random_matrices():
    """Test the residual identity and full-rank recovery on 20 matrices up to 50x30."""
    generator = np.random.default_rng(15)
    for _ in range(20):
        n, m = (int(v) for v in generator.integers(2, [51, 31]))
        a = generator.normal(size=(n, m))
        sigma = np.linalg.svd(a, compute_uv=False)
        rank = min(n, m)
        k = int(generator.integers(1, rank + 1))
        distorted, result = svd_distort(_from_records(a), k)
        expected = float(np.sum(sigma[k:] ** 2))
        assert result.residual_frobenius**2 == pytest.approx(expected, rel=1e-8, abs=1e-12)
        np.testing.assert_allclose(result.singular_values, sigma[:k], rtol=1e-8)
        recovered, _ = svd_distort(_from_records(a), rank)
        np.testing.assert_allclose(recovered.records, a, atol=1e-9)


def test_svd_distort_full_rank_is_identity():
    """Test that k = rank(A) reproduces A."""
    a = np.random.default_rng(6).normal(size=(7, 4))
    distorted, result = svd_distort(_from_records(a), 4)
    np.testing.assert_allclose(distorted.records, a, atol=1e-9)
    assert result.residual_frobenius < 1e-9


def test_svd_distort_rank_one_input():
    """Test a rank-1 matrix at k=1."""
    a = np.outer([1.0, 2.0, 3.0], [2.0, 0.0, -1.0, 4.0])
    distorted, result = svd_distort(_from_records(a), 1)
    np.testing.assert_allclose(distorted.records, a, atol=1e-10)
    assert result.left.shape == (3, 1)
    assert result.right.shape == (1, 4)


def test_svd_distort_rank_range():
    """Test k outside [1, min(n, m)]."""
    dataset = _from_records(np.ones((4, 3)))
    with pytest.raises(ParameterError, match=r"SVD rank k=4 must be in \[1, 3\]"):
        svd_distort(dataset, 4)
    with pytest.raises(ParameterError, match="SVD rank k=0"):
        svd_distort(dataset, 0)


def test_nmf_exact_factorization():
    """Test convergence on A = W0 H0 with non-negative rank-2 factors."""
    generator = np.random.default_rng(7)
    a = generator.uniform(size=(20, 2)) @ generator.uniform(size=(2, 8))
    _, result = nmf_distort(_from_records(a), 2, Rng(7), max_iter=10_000, tol=0.0)
    assert result.objective_trace[-1] < 1e-6 * np.linalg.norm(a) ** 2
    assert np.all(result.left >= 0)
    assert np.all(result.right >= 0)


def test_nmf_objective_is_monotone():
    """Test that the objective never increases beyond rounding."""
    a = np.random.default_rng(8).uniform(size=(15, 6))
    _, result = nmf_distort(_from_records(a), 3, Rng(8), max_iter=200, tol=0.0)
    trace = np.asarray(result.objective_trace)
    assert len(trace) == result.iterations + 1
    assert np.all(np.diff(trace) <= 1e-12 * trace[:-1])


def test_nmf_monotone_on_random_matrices():
    """Test the non-increasing objective on 10 random non-negative matrices."""
    generator = np.random.default_rng(18)
    for seed in range(10):
        n, m = (int(v) for v in generator.integers(3, [31, 16]))
        k = int(generator.integers(1, min(n, m)))
        a = generator.uniform(size=(n, m))
        _, result = nmf_distort(_from_records(a), k, Rng(seed), max_iter=150, tol=0.0)
        trace = np.asarray(result.objective_trace)
        assert np.all(trace[1:] <= trace[:-1] + 1e-12 * trace[:-1]), f"seed {seed}"


def test_nmf_exact_factorization_random_inputs():
    """Test convergence on 10 exactly factorable matrices of rank 1 and 2."""
    generator = np.random.default_rng(19)
    for seed in range(10):
        k = 1 + seed % 2
        a = generator.uniform(0.1, 1.0, size=(12, k)) @ generator.uniform(0.1, 1.0, size=(k, 6))
        _, result = nmf_distort(_from_records(a), k, Rng(seed), max_iter=10_000, tol=0.0)
        assert result.objective_trace[-1] < 1e-6 * np.linalg.norm(a) ** 2, f"seed {seed}"


def test_nmf_stops_on_tolerance():
    """Test convergence flags for a loose and an unreachable tolerance."""
    a = np.random.default_rng(9).uniform(size=(10, 5))
    _, loose = nmf_distort(_from_records(a), 2, Rng(9), max_iter=500, tol=1e-2)
    assert loose.converged
    assert loose.iterations < 500
    _, capped = nmf_distort(_from_records(a), 2, Rng(9), max_iter=3, tol=0.0)
    assert capped.iterations == 3
    data = capped.to_dict()
    assert data["method"] == "nmf"
    assert len(data["objective_trace"]) == 4
    assert "left" not in data
    assert "left" in capped.to_dict(include_factors=True)


def test_nmf_rejects_negative_entry():
    """Test that the first negative entry is named."""
    a = np.array([[1.0, 2.0], [3.0, -0.5], [1.0, 1.0]])
    with pytest.raises(ParameterError, match="record 1, column 'x1' is -0.5"):
        nmf_distort(_from_records(a), 1, Rng(0))


def test_nmf_is_deterministic():
    """Test that the seed fixes the initial factors."""
    a = np.random.default_rng(10).uniform(size=(6, 4))
    first, _ = nmf_distort(_from_records(a), 2, Rng(3), max_iter=50)
    second, _ = nmf_distort(_from_records(a), 2, Rng(3), max_iter=50)
    np.testing.assert_array_equal(first.numeric, second.numeric)
