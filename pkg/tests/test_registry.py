"""
Unit tests for the technique registry.
"""

import pytest

from pertubox.errors import UnknownTechniqueError
from pertubox.registry import (
    DM_TASKS,
    TECHNIQUE_IDS,
    UNSPECIFIED,
    registry_entry,
    resolve_technique,
    technique_registry,
)


def test_registry_lists_every_technique_once():
    """Test ids, order and uniqueness."""
    entries = technique_registry()
    assert [e.technique for e in entries] == list(TECHNIQUE_IDS)
    assert len(set(TECHNIQUE_IDS)) == len(TECHNIQUE_IDS) == 11
    assert TECHNIQUE_IDS[:3] == ("k_anonymity", "l_diversity", "t_closeness")


@pytest.mark.parametrize(
    ("technique", "privacy", "preserved", "tasks"),
    [
        ("noise_addition", "Average", "Values distribution", {"association", "classification"}),
        ("randomized_response", "Average", "Values distribution", {"classification"}),
        ("condensation", "Low", "Covariance structure", {"classification"}),
        ("random_rotation", "Low", "Geometrical characteristic", {"classification"}),
        ("geometric", "Very Low", "Geometrical characteristic", {"classification"}),
        (
            "random_projection",
            "Very Low",
            "Corelation between dimension",
            {"classification", "clustering"},
        ),
        ("nmf", "Very Low", "Corelation between dimension", {"classification"}),
    ],
)
def test_registry_cells(technique, privacy, preserved, tasks):
    """Test transcribed assessment labels."""
    entry = registry_entry(technique)
    assert entry.privacy_loss_label == privacy
    assert entry.preserved_property == preserved
    assert entry.dm_tasks == frozenset(tasks)
    assert entry.dm_tasks <= set(DM_TASKS)


def test_anonymization_entries_share_labels():
    """Test the merged anonymization cells."""
    labels = {
        (e.privacy_loss_label, e.information_loss_label, e.indistinguishability_level)
        for e in technique_registry()[:3]
    }
    assert labels == {("Average", "Low", "k")}


def test_blank_cells_read_unspecified():
    """Test that the SVD row carries no labels."""
    entry = registry_entry("svd")
    assert entry.privacy_loss_label == UNSPECIFIED
    assert entry.modifies_dm_algorithms == UNSPECIFIED
    assert entry.dm_tasks == frozenset()
    assert entry.data_dimension == "multi"


def test_resolve_aliases():
    """Test alias and case handling."""
    assert resolve_technique("rotate") == "random_rotation"
    assert resolve_technique("  NOISE ") == "noise_addition"
    assert resolve_technique("k-anonymity") == "k_anonymity"
    assert resolve_technique("svd") == "svd"


def test_unknown_technique():
    """Test that an unknown name lists the known ids."""
    with pytest.raises(UnknownTechniqueError, match="unknown technique 'bogus'.*svd"):
        resolve_technique("bogus")


def test_entry_to_dict():
    """Test the JSON shape of one entry."""
    data = registry_entry("random_projection").to_dict()
    assert data["dm_tasks"] == ["classification", "clustering"]
    assert set(data) == {
        "technique",
        "name",
        "privacy_loss_label",
        "information_loss_label",
        "modifies_dm_algorithms",
        "dm_tasks",
        "data_dimension",
        "preserved_property",
        "data_type",
        "indistinguishability_level",
    }
