"""
k-anonymity enforcement and k-anonymity / l-diversity / t-closeness checks.

The enforcer is a greedy top-down partitioner: a group of records is cut at
the median of the quasi-identifier with the widest normalized span, as long
as both halves keep at least k records. Each final group is then recoded:
numeric quasi-identifiers become the group's [min, max] interval, categorical
ones the lowest common ancestor in their generalization hierarchy.
"""

import json
import logging
import math
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

import numpy as np
import numpy.typing as npt
from scipy.stats import wasserstein_distance

from pertubox.dataset import (
    ColumnKind,
    ColumnRole,
    ColumnSpec,
    Dataset,
    Schema,
    format_number,
)
from pertubox.errors import (
    AnonymizationError,
    HierarchyError,
    InfeasibleError,
    ParameterError,
    SchemaError,
)

logger = logging.getLogger(__name__)

ROOT_LABEL = "*"


@dataclass(frozen=True)
class Interval:
    """Closed numeric interval [lo, hi] used as a generalized cell."""

    lo: float
    hi: float

    def __str__(self) -> str:
        if self.lo == self.hi:
            return format_number(self.lo)
        return f"[{format_number(self.lo)},{format_number(self.hi)}]"


Cell = Union[str, float, Interval]


@dataclass(frozen=True)
class Hierarchy:
    """Rooted label tree for one categorical quasi-identifier."""

    column: str
    root: str
    parent: Mapping[str, str]
    leaves: tuple[str, ...]
    ranks: Mapping[str, int]

    @classmethod
    def from_tree(cls, column: str, tree: Mapping[str, Sequence[str]]) -> "Hierarchy":
        """
        Build from {"node": ["child", ...], ...}.

        Every node has at most one parent, exactly one node has none, and all
        nodes are reachable from it.
        """
        parent: dict[str, str] = {}
        nodes: set[str] = set(tree)
        for node, kids in tree.items():
            for kid in kids:
                if kid in parent:
                    raise HierarchyError(
                        f"hierarchy '{column}': '{kid}' appears under both "
                        f"'{parent[kid]}' and '{node}'"
                    )
                parent[kid] = node
                nodes.add(kid)
        roots = sorted(n for n in nodes if n not in parent)
        if len(roots) != 1:
            raise HierarchyError(f"hierarchy '{column}' needs exactly one root, found {roots}")

        root = roots[0]
        leaves: list[str] = []
        seen: set[str] = set()
        stack = [root]
        while stack:
            node = stack.pop()
            if node in seen:
                raise HierarchyError(f"hierarchy '{column}' has a cycle through '{node}'")
            seen.add(node)
            kids = list(tree.get(node, ()))
            if not kids:
                leaves.append(node)
            stack.extend(reversed(kids))
        if seen != nodes:
            unreachable = sorted(nodes - seen)
            raise HierarchyError(f"hierarchy '{column}' is not connected: {unreachable}")
        return cls(
            column=column,
            root=root,
            parent=parent,
            leaves=tuple(leaves),
            ranks={leaf: i for i, leaf in enumerate(leaves)},
        )

    @classmethod
    def flat(cls, column: str, values: Sequence[str]) -> "Hierarchy":
        """Two-level hierarchy: every distinct value directly under '*'."""
        distinct = sorted(set(values))
        return cls.from_tree(column, {ROOT_LABEL: distinct})

    def rank(self, label: str) -> int:
        """Position of a leaf in depth-first order."""
        try:
            return self.ranks[label]
        except KeyError:
            raise HierarchyError(
                f"value '{label}' of column '{self.column}' is not a leaf of its hierarchy"
            ) from None

    def path_to_root(self, label: str) -> list[str]:
        path = [label]
        while path[-1] in self.parent:
            path.append(self.parent[path[-1]])
        return path

    def lowest_common_ancestor(self, labels: Sequence[str]) -> str:
        distinct = list(dict.fromkeys(labels))
        common = self.path_to_root(distinct[0])
        for label in distinct[1:]:
            ancestors = set(self.path_to_root(label))
            common = [node for node in common if node in ancestors]
        return common[0]


class GeneralizationHierarchy:
    """Hierarchies for the categorical quasi-identifiers, keyed by column."""

    def __init__(self, hierarchies: Mapping[str, Hierarchy] | None = None):
        self.hierarchies = dict(hierarchies or {})

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Mapping[str, Sequence[str]]]
    ) -> "GeneralizationHierarchy":
        return cls({column: Hierarchy.from_tree(column, tree) for column, tree in data.items()})

    @classmethod
    def from_json(cls, path: str | Path) -> "GeneralizationHierarchy":
        """Load {"column": {"node": ["child", ...], ...}, ...}."""
        path = Path(path)
        if not path.exists():
            raise HierarchyError(f"hierarchy file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise HierarchyError(f"hierarchy file {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def for_column(self, column: str, values: Sequence[str]) -> Hierarchy:
        """The declared hierarchy, or a flat one over the observed values."""
        if column in self.hierarchies:
            return self.hierarchies[column]
        return Hierarchy.flat(column, values)


@dataclass(frozen=True)
class AnonymizedTable:
    """
    Generalized table: identifier columns removed, quasi-identifier cells
    generalized, all other cells unchanged.

    equivalence_classes holds record indices grouped by identical
    quasi-identifier tuple; source_rows maps each record to its row in the
    input dataset.
    """

    columns: tuple[ColumnSpec, ...]
    records: tuple[tuple[Cell, ...], ...]
    source_rows: tuple[int, ...]
    suppressed_count: int
    equivalence_classes: tuple[tuple[int, ...], ...]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def n_records(self) -> int:
        return len(self.records)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown column '{name}'") from None

    def column_spec(self, name: str) -> ColumnSpec:
        return self.columns[self.index_of(name)]

    def column_values(self, name: str) -> list[Cell]:
        j = self.index_of(name)
        return [record[j] for record in self.records]

    def class_values(self, class_id: int, name: str) -> list[Cell]:
        j = self.index_of(name)
        return [self.records[i][j] for i in self.equivalence_classes[class_id]]

    @property
    def class_sizes(self) -> list[int]:
        return [len(members) for members in self.equivalence_classes]

    def to_dataset(self) -> Dataset:
        """Dataset view: generalized cells become text labels."""
        schema = Schema(columns=self.columns)
        columns: dict[str, list[Any]] = {}
        for j, spec in enumerate(self.columns):
            values = [record[j] for record in self.records]
            if spec.kind == ColumnKind.NUMERIC:
                columns[spec.name] = [float(v) for v in values]  # type: ignore[arg-type]
            else:
                columns[spec.name] = [str(v) for v in values]
        return Dataset.from_columns(schema, columns)

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "AnonymizedTable":
        """Read an already generalized dataset; classes come from its QI tuples."""
        columns = tuple(c for c in dataset.schema.columns if c.role != ColumnRole.IDENTIFIER)
        values = [dataset.column(c.name) for c in columns]
        records = tuple(
            tuple(
                float(col[i]) if isinstance(col, np.ndarray) else col[i]
                for col in values
            )
            for i in range(dataset.n_records)
        )
        qi_index = [j for j, c in enumerate(columns) if c.role == ColumnRole.QUASI_IDENTIFIER]
        return cls(
            columns=columns,
            records=records,
            source_rows=tuple(range(dataset.n_records)),
            suppressed_count=0,
            equivalence_classes=_group_by_qi(records, qi_index),
        )


def anonymized_schema(schema: Schema) -> Schema:
    """Output schema of k_anonymize: identifiers dropped, QI columns categorical."""
    columns = []
    for spec in schema.columns:
        if spec.role == ColumnRole.IDENTIFIER:
            continue
        if spec.role == ColumnRole.QUASI_IDENTIFIER and spec.kind != ColumnKind.CATEGORICAL:
            spec = ColumnSpec(name=spec.name, kind=ColumnKind.CATEGORICAL, role=spec.role)
        columns.append(spec)
    return Schema(columns=tuple(columns))


def _group_by_qi(
    records: Sequence[Sequence[Cell]], qi_index: Sequence[int]
) -> tuple[tuple[int, ...], ...]:
    classes: dict[tuple[str, ...], list[int]] = {}
    for i, record in enumerate(records):
        key = tuple(str(record[j]) for j in qi_index)
        classes.setdefault(key, []).append(i)
    return tuple(tuple(members) for members in classes.values())


class _Partitioner:
    """Greedy median partitioning over encoded quasi-identifier values."""

    def __init__(self, codes: npt.NDArray[np.float64], k: int, budget: int):
        self.codes = codes
        self.k = k
        self.remaining = budget
        full = codes.max(axis=0) - codes.min(axis=0)
        self.full_span = np.where(full > 0, full, 1.0)
        self.partitions: list[npt.NDArray[np.intp]] = []
        self.suppressed: list[int] = []

    def _candidate_cuts(
        self, members: npt.NDArray[np.intp]
    ) -> list[tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]]:
        sub = self.codes[members]
        spans = (sub.max(axis=0) - sub.min(axis=0)) / self.full_span
        order = sorted(range(len(spans)), key=lambda j: (-spans[j], j))
        cuts = []
        for j in order:
            if spans[j] <= 0:
                break
            column = sub[:, j]
            median = np.sort(column)[(len(column) - 1) // 2]
            cuts.append((members[column <= median], members[column > median]))
            # Ties moved to the right-hand side.
            cuts.append((members[column < median], members[column >= median]))
        return cuts

    def run(self, members: npt.NDArray[np.intp]) -> None:
        cuts = self._candidate_cuts(members)
        for left, right in cuts:
            if len(left) >= self.k and len(right) >= self.k:
                self.run(left)
                self.run(right)
                return

        if self.remaining > 0:
            for left, right in cuts:
                small, large = (left, right) if len(left) < len(right) else (right, left)
                if 0 < len(small) < self.k <= len(large) and len(small) <= self.remaining:
                    self.remaining -= len(small)
                    self.suppressed.extend(int(i) for i in small)
                    logger.debug("suppressed %d outlying records", len(small))
                    self.run(large)
                    return

        self.partitions.append(members)


def k_anonymize(
    dataset: Dataset,
    k: int,
    hierarchies: GeneralizationHierarchy | None = None,
    max_suppression_fraction: float = 0.0,
) -> AnonymizedTable:
    """
    Generalize (and, within budget, suppress) records until every
    equivalence class has at least k members.

    Raises:
        AnonymizationError: the schema has no quasi-identifier columns.
        InfeasibleError: k exceeds the number of records.
        HierarchyError: a categorical value is not a leaf of its hierarchy.
    """
    schema = dataset.schema
    qi_specs = schema.with_role(ColumnRole.QUASI_IDENTIFIER)
    if not qi_specs:
        raise AnonymizationError("no quasi-identifier columns in schema")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 0.0 <= max_suppression_fraction <= 1.0:
        raise ParameterError(
            f"max_suppression_fraction must be in [0, 1], got {max_suppression_fraction}"
        )
    n = dataset.n_records
    if k > n:
        raise InfeasibleError(f"infeasible: k={k} exceeds the {n} records in the table")

    hierarchies = hierarchies or GeneralizationHierarchy()
    trees: dict[str, Hierarchy] = {}
    codes = np.empty((n, len(qi_specs)))
    for j, spec in enumerate(qi_specs):
        values = dataset.column(spec.name)
        if isinstance(values, np.ndarray):
            codes[:, j] = values
        else:
            tree = hierarchies.for_column(spec.name, values)
            trees[spec.name] = tree
            codes[:, j] = [tree.rank(v) for v in values]

    budget = math.floor(max_suppression_fraction * n + 1e-9)
    partitioner = _Partitioner(codes, k, budget)
    partitioner.run(np.arange(n, dtype=np.intp))

    generalized: dict[int, dict[str, Cell]] = {}
    for members in partitioner.partitions:
        recoded: dict[str, Cell] = {}
        for spec in qi_specs:
            values = dataset.column(spec.name)
            if isinstance(values, np.ndarray):
                group = values[members]
                recoded[spec.name] = Interval(float(group.min()), float(group.max()))
            else:
                recoded[spec.name] = trees[spec.name].lowest_common_ancestor(
                    [values[i] for i in members]
                )
        for i in members:
            generalized[int(i)] = recoded

    out_schema = anonymized_schema(schema)
    kept = sorted(generalized)
    records = []
    for row in kept:
        record: list[Cell] = []
        for spec in out_schema.columns:
            if spec.role == ColumnRole.QUASI_IDENTIFIER:
                record.append(generalized[row][spec.name])
            else:
                record.append(dataset.cell(row, spec.name))
        records.append(tuple(record))

    qi_index = [
        j for j, c in enumerate(out_schema.columns) if c.role == ColumnRole.QUASI_IDENTIFIER
    ]
    table = AnonymizedTable(
        columns=out_schema.columns,
        records=tuple(records),
        source_rows=tuple(kept),
        suppressed_count=len(partitioner.suppressed),
        equivalence_classes=_group_by_qi(records, qi_index),
    )
    logger.info(
        "k-anonymized %d records into %d classes (k=%d, suppressed %d)",
        n, len(table.equivalence_classes), k, table.suppressed_count,
    )
    return table


@dataclass(frozen=True)
class KAnonymityVerdict:
    holds: bool
    k: int
    class_id: int | None = None
    size: int | None = None


def check_k_anonymity(table: AnonymizedTable, k: int) -> KAnonymityVerdict:
    """Holds iff the smallest equivalence class has at least k records."""
    sizes = table.class_sizes
    if not sizes:
        return KAnonymityVerdict(holds=True, k=k)
    smallest = int(np.argmin(sizes))
    if sizes[smallest] >= k:
        return KAnonymityVerdict(holds=True, k=k)
    return KAnonymityVerdict(holds=False, k=k, class_id=smallest, size=sizes[smallest])


@dataclass(frozen=True)
class DiversityVerdict:
    holds: bool
    column: str
    l: int  # noqa: E741
    distinct_counts: tuple[int, ...]
    failing: tuple[int, ...]


def check_l_diversity(
    table: AnonymizedTable, sensitive_column: str, l: int  # noqa: E741
) -> DiversityVerdict:
    """Distinct l-diversity: every class holds at least l distinct sensitive values."""
    table.index_of(sensitive_column)
    if l < 1:
        raise ParameterError(f"l must be >= 1, got {l}")
    counts = tuple(
        len({str(v) for v in table.class_values(c, sensitive_column)})
        for c in range(len(table.equivalence_classes))
    )
    failing = tuple(c for c, count in enumerate(counts) if count < l)
    return DiversityVerdict(
        holds=not failing, column=sensitive_column, l=l, distinct_counts=counts, failing=failing
    )


@dataclass(frozen=True)
class ClosenessVerdict:
    holds: bool
    column: str
    t: float
    distances: tuple[float, ...]
    failing: tuple[int, ...]


def _total_variation(sample: Sequence[Cell], population: Sequence[Cell]) -> float:
    p = Counter(str(v) for v in sample)
    q = Counter(str(v) for v in population)
    return 0.5 * sum(
        abs(p[c] / len(sample) - q[c] / len(population)) for c in set(p) | set(q)
    )


def check_t_closeness(table: AnonymizedTable, sensitive_column: str, t: float) -> ClosenessVerdict:
    """
    Distance of each class's sensitive distribution from the whole table's.

    Categorical columns use total variation; numeric columns use the 1-D
    earth mover's distance divided by the value range (0 for a zero range).
    """
    spec = table.column_spec(sensitive_column)
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must be in [0, 1], got {t}")
    population = table.column_values(sensitive_column)
    distances: list[float] = []

    if spec.kind == ColumnKind.NUMERIC:
        everything = np.asarray(population, dtype=np.float64)
        spread = float(everything.max() - everything.min()) if len(everything) else 0.0
        for c in range(len(table.equivalence_classes)):
            if spread == 0.0:
                distances.append(0.0)
                continue
            group = np.asarray(table.class_values(c, sensitive_column), dtype=np.float64)
            distances.append(float(wasserstein_distance(group, everything)) / spread)
    else:
        for c in range(len(table.equivalence_classes)):
            distances.append(_total_variation(table.class_values(c, sensitive_column), population))

    failing = tuple(c for c, d in enumerate(distances) if d > t)
    return ClosenessVerdict(
        holds=not failing,
        column=sensitive_column,
        t=t,
        distances=tuple(distances),
        failing=failing,
    )
