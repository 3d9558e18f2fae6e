"""
Machine-readable assessment framework for the data-modification techniques.

One entry per technique, transcribed cell for cell from the assessment table.
Cells the table leaves blank or marks "-" read "unspecified". Labels are
metadata only; nothing compares them against measured metrics.
"""

from dataclasses import dataclass

from pertubox.errors import UnknownTechniqueError

UNSPECIFIED = "unspecified"

DM_TASKS = ("association", "classification", "clustering")


@dataclass(frozen=True)
class TechniqueRegistryEntry:
    technique: str
    name: str
    privacy_loss_label: str
    information_loss_label: str
    modifies_dm_algorithms: str
    dm_tasks: frozenset[str]
    data_dimension: str
    preserved_property: str
    data_type: str
    indistinguishability_level: str

    def to_dict(self) -> dict[str, object]:
        return {
            "technique": self.technique,
            "name": self.name,
            "privacy_loss_label": self.privacy_loss_label,
            "information_loss_label": self.information_loss_label,
            "modifies_dm_algorithms": self.modifies_dm_algorithms,
            "dm_tasks": sorted(self.dm_tasks),
            "data_dimension": self.data_dimension,
            "preserved_property": self.preserved_property,
            "data_type": self.data_type,
            "indistinguishability_level": self.indistinguishability_level,
        }


def _anonymization(technique: str, name: str) -> TechniqueRegistryEntry:
    # The three anonymization columns share merged cells.
    return TechniqueRegistryEntry(
        technique=technique,
        name=name,
        privacy_loss_label="Average",
        information_loss_label="Low",
        modifies_dm_algorithms="no",
        dm_tasks=frozenset(),
        data_dimension="multi",
        preserved_property=UNSPECIFIED,
        data_type=UNSPECIFIED,
        indistinguishability_level="k",
    )


def _multidim(
    technique: str,
    name: str,
    privacy: str,
    preserved: str,
    tasks: tuple[str, ...] = ("classification",),
    information: str = "Very Low",
    indistinguishability: str = UNSPECIFIED,
) -> TechniqueRegistryEntry:
    return TechniqueRegistryEntry(
        technique=technique,
        name=name,
        privacy_loss_label=privacy,
        information_loss_label=information,
        modifies_dm_algorithms="no",
        dm_tasks=frozenset(tasks),
        data_dimension="multi",
        preserved_property=preserved,
        data_type="numerical",
        indistinguishability_level=indistinguishability,
    )


_ENTRIES: tuple[TechniqueRegistryEntry, ...] = (
    _anonymization("k_anonymity", "k-anonymity"),
    _anonymization("l_diversity", "l-diversity"),
    _anonymization("t_closeness", "t-closeness"),
    TechniqueRegistryEntry(
        technique="noise_addition",
        name="Noise Addition",
        privacy_loss_label="Average",
        information_loss_label="Low",
        modifies_dm_algorithms="yes",
        dm_tasks=frozenset({"association", "classification"}),
        data_dimension="single",
        preserved_property="Values distribution",
        data_type=UNSPECIFIED,
        indistinguishability_level=UNSPECIFIED,
    ),
    TechniqueRegistryEntry(
        technique="randomized_response",
        name="Randomized Response",
        privacy_loss_label="Average",
        information_loss_label="Low",
        modifies_dm_algorithms="yes",
        dm_tasks=frozenset({"classification"}),
        data_dimension="single",
        preserved_property="Values distribution",
        data_type="categorical",
        indistinguishability_level=UNSPECIFIED,
    ),
    _multidim(
        "condensation",
        "Condensation",
        privacy="Low",
        preserved="Covariance structure",
        indistinguishability="k",
    ),
    _multidim("random_rotation", "Random Rotation", "Low", "Geometrical characteristic"),
    _multidim("geometric", "Geometric", "Very Low", "Geometrical characteristic"),
    _multidim(
        "random_projection",
        "Random Projection",
        "Very Low",
        "Corelation between dimension",
        tasks=("classification", "clustering"),
    ),
    _multidim("nmf", "NMF", "Very Low", "Corelation between dimension"),
    TechniqueRegistryEntry(
        technique="svd",
        name="SVD",
        privacy_loss_label=UNSPECIFIED,
        information_loss_label=UNSPECIFIED,
        modifies_dm_algorithms=UNSPECIFIED,
        dm_tasks=frozenset(),
        data_dimension="multi",
        preserved_property=UNSPECIFIED,
        data_type=UNSPECIFIED,
        indistinguishability_level=UNSPECIFIED,
    ),
)

TECHNIQUE_IDS: tuple[str, ...] = tuple(entry.technique for entry in _ENTRIES)

ALIASES: dict[str, str] = {
    "k-anonymity": "k_anonymity",
    "kanon": "k_anonymity",
    "l-diversity": "l_diversity",
    "t-closeness": "t_closeness",
    "noise": "noise_addition",
    "rr": "randomized_response",
    "response": "randomized_response",
    "condense": "condensation",
    "rotate": "random_rotation",
    "rotation": "random_rotation",
    "geometric_perturbation": "geometric",
    "project": "random_projection",
    "projection": "random_projection",
}


def technique_registry() -> list[TechniqueRegistryEntry]:
    """All registry entries in table order."""
    return list(_ENTRIES)


def resolve_technique(name: str) -> str:
    """Canonical technique id for an id or alias."""
    key = name.strip().lower()
    technique = ALIASES.get(key, key)
    if technique not in TECHNIQUE_IDS:
        known = ", ".join(TECHNIQUE_IDS)
        raise UnknownTechniqueError(f"unknown technique '{name}' (known: {known})")
    return technique


def registry_entry(name: str) -> TechniqueRegistryEntry:
    technique = resolve_technique(name)
    return next(entry for entry in _ENTRIES if entry.technique == technique)
