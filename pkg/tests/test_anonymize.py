"""
Unit tests for k-anonymization and the k / l / t predicates.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from pertubox.anonymize import (
    AnonymizedTable,
    GeneralizationHierarchy,
    Hierarchy,
    Interval,
    anonymized_schema,
    check_k_anonymity,
    check_l_diversity,
    check_t_closeness,
    k_anonymize,
)
from pertubox.dataset import ColumnKind, ColumnRole, Dataset, Schema
from pertubox.errors import (
    AnonymizationError,
    HierarchyError,
    InfeasibleError,
    ParameterError,
    SchemaError,
)

REGIONS = {"*": ["europe", "asia"], "europe": ["fr", "de"], "asia": ["jp", "cn"]}


def _patients(ages, diseases=None, ids=None) -> Dataset:
    n = len(ages)
    schema = Schema.from_dict(
        {
            "columns": [
                {"name": "name", "kind": "categorical", "role": "identifier"},
                {"name": "age", "kind": "numeric", "role": "quasi_identifier"},
                {"name": "disease", "kind": "categorical", "role": "sensitive"},
            ]
        }
    )
    return Dataset.from_columns(
        schema,
        {
            "name": ids or [f"p{i}" for i in range(n)],
            "age": ages,
            "disease": diseases or ["flu"] * n,
        },
    )


def _generalized(zips, diseases) -> AnonymizedTable:
    schema = Schema.from_dict(
        {
            "columns": [
                {"name": "zip", "kind": "categorical", "role": "quasi_identifier"},
                {"name": "disease", "kind": "categorical", "role": "sensitive"},
            ]
        }
    )
    dataset = Dataset.from_columns(schema, {"zip": zips, "disease": diseases})
    return AnonymizedTable.from_dataset(dataset)


def test_median_split_example():
    """Test that {1,2,3,7,8,9} with k=3 splits into [1,3] and [7,9]."""
    table = k_anonymize(_patients([1, 2, 3, 7, 8, 9]), k=3)
    assert table.class_sizes == [3, 3]
    assert table.suppressed_count == 0
    assert table.column_values("age") == [Interval(1.0, 3.0)] * 3 + [Interval(7.0, 9.0)] * 3
    assert str(table.column_values("age")[0]) == "[1.0,3.0]"


def test_k_equal_one_keeps_values():
    """Test that k=1 returns the input without its identifier columns."""
    dataset = _patients([5, 1, 3], ["flu", "cold", "flu"])
    table = k_anonymize(dataset, k=1)
    assert table.suppressed_count == 0
    output = table.to_dataset()
    assert output.schema.names == ["age", "disease"]
    assert output.column("age") == ("5.0", "1.0", "3.0")
    assert output.column("disease") == dataset.column("disease")


def test_k_equal_one_keeps_values_on_random_tables():
    """Test k=1 cell for cell on mixed numeric and categorical tables."""
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 30))
        ages = rng.uniform(18, 90, size=n).round(1).tolist()
        diseases = rng.choice(["flu", "cold", "cancer"], size=n).tolist()
        table = k_anonymize(_patients(ages, diseases), k=1).to_dataset()
        assert table.column("age") == tuple(repr(float(a)) for a in ages)
        assert table.column("disease") == tuple(diseases)


def test_degenerate_interval_prints_as_number():
    """Test that a one-value interval is written as the plain number."""
    assert str(Interval(5.0, 5.0)) == "5.0"
    assert str(Interval(0.1, 0.1)) == "0.1"
    assert str(Interval(1.0, 2.0)) == "[1.0,2.0]"


def test_identifiers_dropped_and_sensitive_unchanged():
    """Test de-identification and cell-for-cell equality outside the QI."""
    diseases = ["flu", "cold", "flu", "cancer", "cold", "flu"]
    dataset = _patients([30, 31, 32, 50, 51, 52], diseases)
    table = k_anonymize(dataset, k=2)
    assert table.names == ["age", "disease"]
    assert [dataset.labels["disease"][r] for r in table.source_rows] == table.column_values(
        "disease"
    )


def test_infeasible_k():
    """Test that k above the record count is infeasible."""
    with pytest.raises(InfeasibleError, match="infeasible"):
        k_anonymize(_patients([1, 2, 3]), k=4)


def test_no_quasi_identifier():
    """Test that a schema without quasi-identifiers is rejected."""
    schema = Schema.from_dict({"columns": [{"name": "x", "kind": "numeric"}]})
    dataset = Dataset.from_columns(schema, {"x": [1, 2]})
    with pytest.raises(AnonymizationError, match="no quasi-identifier"):
        k_anonymize(dataset, k=1)


def test_invalid_parameters():
    """Test k and suppression-fraction ranges."""
    with pytest.raises(ParameterError, match="k must be >= 1"):
        k_anonymize(_patients([1, 2]), k=0)
    with pytest.raises(ParameterError, match="max_suppression_fraction"):
        k_anonymize(_patients([1, 2]), k=1, max_suppression_fraction=1.5)


def test_suppression_removes_outlier_within_budget():
    """Test that an outlier blocking every cut is suppressed when allowed."""
    ages = [0, 0, 0, 0, 0, 0, 50]
    plain = k_anonymize(_patients(ages), k=3)
    assert plain.class_sizes == [7]
    assert plain.column_values("age")[0] == Interval(0.0, 50.0)

    suppressed = k_anonymize(_patients(ages), k=3, max_suppression_fraction=0.2)
    assert suppressed.suppressed_count == 1
    assert suppressed.source_rows == (0, 1, 2, 3, 4, 5)
    assert suppressed.column_values("age") == [Interval(0.0, 0.0)] * 6


def test_suppression_respects_budget():
    """Test that nothing is suppressed when the budget is too small."""
    table = k_anonymize(_patients([0, 0, 0, 0, 0, 0, 50]), k=3, max_suppression_fraction=0.1)
    assert table.suppressed_count == 0


def test_enforcer_and_verifier_agree_on_random_tables():
    """Test k_anonymize output always passes check_k_anonymity."""
    rng = np.random.default_rng(2024)
    for trial in range(100):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(1, n + 1))
        ages = rng.integers(18, 90, size=n).tolist()
        table = k_anonymize(_patients(ages), k=k)
        verdict = check_k_anonymity(table, k)
        assert verdict.holds, f"trial {trial}: class {verdict.class_id} has {verdict.size}"
        assert sum(table.class_sizes) == n


def test_enforcer_and_verifier_agree_on_mixed_quasi_identifiers():
    """Test k-anonymity on random tables with numeric and categorical QIs."""
    schema = Schema.from_dict(
        {
            "columns": [
                {"name": "age", "kind": "numeric", "role": "quasi_identifier"},
                {"name": "region", "kind": "categorical", "role": "quasi_identifier"},
                {"name": "income", "kind": "numeric", "role": "quasi_identifier"},
                {"name": "disease", "kind": "categorical", "role": "sensitive"},
            ]
        }
    )
    tree = Hierarchy.from_tree("region", REGIONS)
    hierarchies = GeneralizationHierarchy.from_dict({"region": REGIONS})
    rng = np.random.default_rng(2025)
    for trial in range(100):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(1, n + 1))
        regions = rng.choice(["fr", "de", "jp", "cn"], size=n).tolist()
        dataset = Dataset.from_columns(
            schema,
            {
                "age": rng.integers(18, 90, size=n),
                "region": regions,
                "income": rng.normal(50.0, 10.0, size=n).round(2),
                "disease": rng.choice(["flu", "cold"], size=n).tolist(),
            },
        )
        fraction = float(rng.choice([0.0, 0.1, 0.3]))
        table = k_anonymize(
            dataset, k=k, hierarchies=hierarchies, max_suppression_fraction=fraction
        )
        verdict = check_k_anonymity(table, k)
        assert verdict.holds, f"trial {trial}: class {verdict.class_id} has {verdict.size}"
        assert sum(table.class_sizes) == table.n_records
        assert table.n_records + table.suppressed_count == n
        assert table.suppressed_count <= fraction * n + 1e-9
        for row, generalized in zip(table.source_rows, table.column_values("region")):
            assert generalized in tree.path_to_root(regions[row])
        for row, cell in zip(table.source_rows, table.column_values("age")):
            assert cell.lo <= dataset.cell(row, "age") <= cell.hi


def test_categorical_hierarchy_generalization():
    """Test recoding categorical quasi-identifiers to their common ancestor."""
    schema = Schema.from_dict(
        {
            "columns": [
                {"name": "country", "kind": "categorical", "role": "quasi_identifier"},
                {"name": "salary", "kind": "numeric", "role": "sensitive"},
            ]
        }
    )
    dataset = Dataset.from_columns(
        schema,
        {
            "country": ["fr", "de", "fr", "de", "jp", "cn", "jp", "cn"],
            "salary": [1, 2, 3, 4, 5, 6, 7, 8],
        },
    )
    hierarchies = GeneralizationHierarchy.from_dict({"country": REGIONS})
    table = k_anonymize(dataset, k=4, hierarchies=hierarchies)
    assert table.column_values("country") == ["europe"] * 4 + ["asia"] * 4
    assert table.column_values("salary") == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]


def test_default_flat_hierarchy_generalizes_to_root():
    """Test that without a hierarchy a mixed class becomes '*'."""
    schema = Schema.from_dict(
        {"columns": [{"name": "city", "kind": "categorical", "role": "quasi_identifier"}]}
    )
    dataset = Dataset.from_columns(schema, {"city": ["a", "b", "c"]})
    table = k_anonymize(dataset, k=3)
    assert table.column_values("city") == ["*", "*", "*"]


def test_value_missing_from_hierarchy():
    """Test that a value outside the declared tree is rejected."""
    schema = Schema.from_dict(
        {"columns": [{"name": "country", "kind": "categorical", "role": "quasi_identifier"}]}
    )
    dataset = Dataset.from_columns(schema, {"country": ["fr", "us"]})
    hierarchies = GeneralizationHierarchy.from_dict({"country": REGIONS})
    with pytest.raises(HierarchyError, match="'us'"):
        k_anonymize(dataset, k=1, hierarchies=hierarchies)


def test_hierarchy_structure():
    """Test ranks, paths and lowest common ancestors."""
    tree = Hierarchy.from_tree("country", REGIONS)
    assert tree.root == "*"
    assert tree.leaves == ("fr", "de", "jp", "cn")
    assert tree.path_to_root("jp") == ["jp", "asia", "*"]
    assert tree.lowest_common_ancestor(["fr", "de"]) == "europe"
    assert tree.lowest_common_ancestor(["fr", "cn"]) == "*"
    assert tree.lowest_common_ancestor(["de", "de"]) == "de"


def test_malformed_hierarchies():
    """Test two roots, shared children and cycles."""
    with pytest.raises(HierarchyError, match="exactly one root"):
        Hierarchy.from_tree("c", {"a": ["x"], "b": ["y"]})
    with pytest.raises(HierarchyError, match="appears under both"):
        Hierarchy.from_tree("c", {"*": ["a", "b"], "a": ["x"], "b": ["x"]})
    with pytest.raises(HierarchyError):
        Hierarchy.from_tree("c", {"*": ["a"], "a": ["b"], "b": ["a"]})


def test_hierarchy_json_file():
    """Test loading hierarchies from JSON."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "h.json"
        path.write_text('{"country": {"*": ["fr", "de"]}}')
        hierarchies = GeneralizationHierarchy.from_json(path)
        assert hierarchies.for_column("country", []).leaves == ("fr", "de")
        with pytest.raises(HierarchyError, match="not found"):
            GeneralizationHierarchy.from_json(Path(tmpdir) / "missing.json")


def test_anonymized_schema():
    """Test that identifiers go and numeric quasi-identifiers become labels."""
    schema = anonymized_schema(_patients([1]).schema)
    assert schema.names == ["age", "disease"]
    assert schema.column("age").kind == ColumnKind.CATEGORICAL
    assert schema.column("age").role == ColumnRole.QUASI_IDENTIFIER


def test_table_dataset_round_trip():
    """Test that an anonymized table survives to_dataset / from_dataset."""
    table = k_anonymize(_patients([1, 2, 3, 7, 8, 9]), k=3)
    again = AnonymizedTable.from_dataset(table.to_dataset())
    assert again.class_sizes == [3, 3]
    assert again.column_values("age")[0] == "[1.0,3.0]"
    assert check_k_anonymity(again, 3).holds


def test_check_k_anonymity_verdicts():
    """Test holds for sizes {3,3} and the witness for {3,2}."""
    assert check_k_anonymity(_generalized(["a"] * 3 + ["b"] * 3, ["x"] * 6), 3).holds
    verdict = check_k_anonymity(_generalized(["a"] * 3 + ["b"] * 2, ["x"] * 5), 3)
    assert not verdict.holds
    assert verdict.class_id == 1
    assert verdict.size == 2


def test_l_diversity_homogeneity():
    """Test that an all-flu class fails distinct 2-diversity."""
    table = _generalized(
        ["a", "a", "a", "b", "b", "b"], ["flu", "flu", "flu", "flu", "cancer", "flu"]
    )
    verdict = check_l_diversity(table, "disease", 2)
    assert not verdict.holds
    assert verdict.failing == (0,)
    assert verdict.distinct_counts == (1, 2)
    assert check_l_diversity(table, "disease", 1).holds


def test_l_diversity_unknown_column():
    """Test that the sensitive column must exist."""
    with pytest.raises(SchemaError, match="unknown column 'illness'"):
        check_l_diversity(_generalized(["a"], ["flu"]), "illness", 1)


def test_t_closeness_total_variation():
    """Test a class {A} against a global {A: 0.5, B: 0.5}: distance 0.5."""
    table = _generalized(["c1", "c1", "c2", "c2"], ["A", "A", "B", "B"])
    verdict = check_t_closeness(table, "disease", 0.4)
    assert not verdict.holds
    assert verdict.distances == (0.5, 0.5)
    assert check_t_closeness(table, "disease", 0.5).holds


def test_t_closeness_identical_distribution():
    """Test that a class matching the table has distance 0."""
    table = _generalized(["c1", "c1", "c2", "c2"], ["A", "B", "A", "B"])
    verdict = check_t_closeness(table, "disease", 0.0)
    assert verdict.holds
    assert verdict.distances == (0.0, 0.0)


def test_t_closeness_numeric():
    """Test normalized earth mover's distance on a numeric sensitive column."""
    schema = Schema.from_dict(
        {
            "columns": [
                {"name": "zip", "kind": "categorical", "role": "quasi_identifier"},
                {"name": "salary", "kind": "numeric", "role": "sensitive"},
            ]
        }
    )
    dataset = Dataset.from_columns(
        schema, {"zip": ["a", "a", "b", "b"], "salary": [0.0, 0.0, 10.0, 10.0]}
    )
    verdict = check_t_closeness(AnonymizedTable.from_dataset(dataset), "salary", 1.0)
    np.testing.assert_allclose(verdict.distances, [0.5, 0.5])

    flat = Dataset.from_columns(schema, {"zip": ["a", "b"], "salary": [3.0, 3.0]})
    assert check_t_closeness(AnonymizedTable.from_dataset(flat), "salary", 0.0).distances == (
        0.0,
        0.0,
    )


def test_predicate_monotonicity():
    """Test that k, l and t verdicts are monotone in their parameter."""
    table = _generalized(
        ["a", "a", "a", "b", "b", "b", "b"],
        ["flu", "cold", "flu", "flu", "cold", "cancer", "flu"],
    )
    k_holds = [check_k_anonymity(table, k).holds for k in range(1, 6)]
    l_holds = [check_l_diversity(table, "disease", l).holds for l in range(1, 5)]  # noqa: E741
    t_holds = [check_t_closeness(table, "disease", t).holds for t in np.linspace(0, 1, 11)]
    assert k_holds == sorted(k_holds, reverse=True)
    assert l_holds == sorted(l_holds, reverse=True)
    assert t_holds == sorted(t_holds)
    assert k_holds[2] and not k_holds[3]
    assert l_holds[1] and not l_holds[2]
