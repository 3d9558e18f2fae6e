"""
Dataset representation, schema with attribute roles, CSV ingestion and emission.
"""

import json
import logging
import math
import os
import tempfile
from collections.abc import Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Any

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from pertubox.errors import DataFormatError, DatasetError, NotNumericError, SchemaError

logger = logging.getLogger(__name__)

_TRUE_LABELS = {"true", "1", "yes", "y", "t"}
_FALSE_LABELS = {"false", "0", "no", "n", "f"}


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    BOOLEAN = "boolean"


class ColumnRole(str, Enum):
    IDENTIFIER = "identifier"
    QUASI_IDENTIFIER = "quasi_identifier"
    SENSITIVE = "sensitive"
    OTHER = "other"


class ColumnSpec(BaseModel):
    """One schema column: name, value kind and privacy role."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    kind: ColumnKind
    role: ColumnRole = ColumnRole.OTHER


class Schema(BaseModel):
    """Ordered column list. Names are unique and there is at least one column."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    columns: tuple[ColumnSpec, ...]

    @model_validator(mode="after")
    def _check_columns(self) -> "Schema":
        if not self.columns:
            raise ValueError("schema needs at least one column")
        names = [c.name for c in self.columns]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate column names: {', '.join(duplicates)}")
        return self

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Schema":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise SchemaError(f"invalid schema: {e}") from e

    @classmethod
    def from_json(cls, path: str | Path) -> "Schema":
        """Load a schema document {"columns": [{"name", "kind", "role"}, ...]}."""
        path = Path(path)
        if not path.exists():
            raise SchemaError(f"schema file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SchemaError(f"schema file {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column '{name}'")

    def with_role(self, role: ColumnRole) -> list[ColumnSpec]:
        return [c for c in self.columns if c.role == role]

    def of_kind(self, kind: ColumnKind) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind == kind]

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.of_kind(ColumnKind.NUMERIC)]

    @property
    def label_names(self) -> list[str]:
        """Names of categorical and boolean columns, in schema order."""
        return [c.name for c in self.columns if c.kind != ColumnKind.NUMERIC]


@dataclass(frozen=True)
class Dataset:
    """
    Column-typed table.

    numeric is the d x n block of numeric columns (schema order); labels maps
    each categorical or boolean column to its n labels. Booleans are stored as
    the canonical labels "true" / "false". Instances are immutable; every
    transform returns a new Dataset.
    """

    schema: Schema
    numeric: npt.NDArray[np.float64]
    labels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        numeric = np.array(self.numeric, dtype=np.float64, copy=True)
        d = len(self.schema.numeric_names)
        if d == 0:
            numeric = np.zeros((0, self._label_rows()))
        if numeric.ndim != 2 or numeric.shape[0] != d:
            raise DatasetError(
                f"numeric block has shape {numeric.shape}, expected {d} rows"
            )
        if not np.all(np.isfinite(numeric)):
            raise DatasetError("numeric values must be finite")
        numeric.setflags(write=False)
        object.__setattr__(self, "numeric", numeric)

        expected = set(self.schema.label_names)
        if set(self.labels) != expected:
            raise DatasetError(
                f"label columns {sorted(self.labels)} do not match schema {sorted(expected)}"
            )
        labels = {
            name: tuple(str(v) for v in self.labels[name]) for name in self.schema.label_names
        }
        n = numeric.shape[1]
        for name, values in labels.items():
            if len(values) != n:
                raise DatasetError(f"column '{name}' has {len(values)} rows, expected {n}")
            if "" in values:
                raise DatasetError(
                    f"column '{name}' has an empty value at row {values.index('') + 1}"
                )
        for spec in self.schema.of_kind(ColumnKind.BOOLEAN):
            bad = {v for v in labels[spec.name] if v not in ("true", "false")}
            if bad:
                raise DatasetError(f"boolean column '{spec.name}' holds {sorted(bad)}")
        object.__setattr__(self, "labels", labels)

    def _label_rows(self) -> int:
        return len(next(iter(self.labels.values()))) if self.labels else 0

    @classmethod
    def from_columns(cls, schema: Schema, columns: Mapping[str, Sequence[Any]]) -> "Dataset":
        """Build a Dataset from per-column sequences keyed by name."""
        missing = [n for n in schema.names if n not in columns]
        if missing:
            raise DatasetError(f"missing columns: {', '.join(missing)}")
        numeric_rows = [np.asarray(columns[n], dtype=np.float64) for n in schema.numeric_names]
        if numeric_rows:
            numeric = np.vstack(numeric_rows)
        else:
            n = len(columns[schema.names[0]])
            numeric = np.zeros((0, n))
        labels: dict[str, tuple[str, ...]] = {}
        for spec in schema.columns:
            if spec.kind == ColumnKind.BOOLEAN:
                labels[spec.name] = tuple(_bool_label(v) for v in columns[spec.name])
            elif spec.kind == ColumnKind.CATEGORICAL:
                labels[spec.name] = tuple(str(v) for v in columns[spec.name])
        return cls(schema=schema, numeric=numeric, labels=labels)

    @property
    def n_records(self) -> int:
        return int(self.numeric.shape[1])

    @property
    def records(self) -> npt.NDArray[np.float64]:
        """Record-major view (n x d) of the numeric block."""
        return self.numeric.T

    def is_all_numeric(self) -> bool:
        return not self.schema.label_names

    def require_numeric(self, technique: str) -> None:
        if not self.is_all_numeric():
            raise NotNumericError(
                f"{technique} needs an all-numeric dataset; "
                f"non-numeric columns: {', '.join(self.schema.label_names)}"
            )

    def column(self, name: str) -> npt.NDArray[np.float64] | tuple[str, ...]:
        """Values of one column: a float array for numeric, labels otherwise."""
        spec = self.schema.column(name)
        if spec.kind == ColumnKind.NUMERIC:
            return self.numeric[self.schema.numeric_names.index(name)]
        return self.labels[name]

    def boolean_column(self, name: str) -> npt.NDArray[np.bool_]:
        spec = self.schema.column(name)
        if spec.kind != ColumnKind.BOOLEAN:
            raise DatasetError(f"column '{name}' is {spec.kind.value}, not boolean")
        return np.array([v == "true" for v in self.labels[name]], dtype=bool)

    def cell(self, row: int, name: str) -> float | str:
        values = self.column(name)
        return float(values[row]) if isinstance(values, np.ndarray) else values[row]

    def with_numeric(self, numeric: npt.ArrayLike, schema: Schema | None = None) -> "Dataset":
        """Same labels, new numeric block (optionally under a new schema)."""
        return Dataset(
            schema=schema or self.schema, numeric=np.asarray(numeric), labels=self.labels
        )

    def with_labels(self, updates: Mapping[str, Sequence[str]]) -> "Dataset":
        labels = dict(self.labels)
        labels.update({k: tuple(v) for k, v in updates.items()})
        return Dataset(schema=self.schema, numeric=self.numeric, labels=labels)


def _bool_label(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    text = str(value).strip().lower()
    if text in _TRUE_LABELS:
        return "true"
    if text in _FALSE_LABELS:
        return "false"
    raise DatasetError(f"not a boolean value: {value!r}")


def format_number(value: float) -> str:
    """Shortest text that parses back to the same double."""
    return repr(float(value))


@contextmanager
def atomic_write(path: str | Path, mode: str = "w") -> Iterator[IO[Any]]:
    """
    Open a temporary file next to `path` and move it into place on success.

    Readers never observe a partially written file; on error the temporary
    file is removed and `path` is left untouched.
    """
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        encoding = None if "b" in mode else "utf-8"
        newline = None if "b" in mode else ""
        with os.fdopen(fd, mode, encoding=encoding, newline=newline) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """
    Read a UTF-8, RFC-4180 CSV file whose header names the schema columns.

    Numeric cells must parse as finite reals, boolean cells as true/false
    (also 1/0, yes/no). Missing values are rejected. Rows are numbered from 1
    in error messages, counting data rows only.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise DataFormatError(f"{path}: no header row") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{path}: {e}") from e

    header = list(frame.columns)
    if sorted(header) != sorted(schema.names) or len(header) != len(schema.names):
        raise DataFormatError(
            f"{path}: header {header} does not match schema columns {schema.names}"
        )
    if len(frame) == 0:
        raise DataFormatError(f"{path}: empty data body")

    columns: dict[str, list[Any]] = {}
    for spec in schema.columns:
        raw = frame[spec.name].tolist()
        parsed: list[Any] = []
        for row, cell in enumerate(raw, start=1):
            if cell == "":
                raise DataFormatError(
                    f"{path}: missing value at row {row}, column '{spec.name}'",
                    row=row, column=spec.name,
                )
            if spec.kind == ColumnKind.NUMERIC:
                parsed.append(_parse_number(path, cell, row, spec.name))
            elif spec.kind == ColumnKind.BOOLEAN:
                try:
                    parsed.append(_bool_label(cell))
                except DatasetError as e:
                    raise DataFormatError(
                        f"{path}: {e} at row {row}, column '{spec.name}'",
                        row=row, column=spec.name,
                    ) from e
            else:
                parsed.append(cell)
        columns[spec.name] = parsed

    dataset = Dataset.from_columns(schema, columns)
    logger.info("loaded %s: %d records, %d columns", path, dataset.n_records, len(schema.names))
    return dataset


def _parse_number(path: Path, cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataFormatError(
            f"{path}: unparseable numeric cell {cell!r} at row {row}, column '{column}'",
            row=row, column=column,
        ) from None
    if not math.isfinite(value):
        raise DataFormatError(
            f"{path}: non-finite numeric cell {cell!r} at row {row}, column '{column}'",
            row=row, column=column,
        )
    return value


def to_frame(dataset: Dataset) -> pd.DataFrame:
    """Text-valued frame in schema order, numbers in shortest round-trip form."""
    data: dict[str, list[str]] = {}
    numeric_names = dataset.schema.numeric_names
    for spec in dataset.schema.columns:
        if spec.kind == ColumnKind.NUMERIC:
            row = dataset.numeric[numeric_names.index(spec.name)]
            data[spec.name] = [format_number(v) for v in row]
        else:
            data[spec.name] = list(dataset.labels[spec.name])
    return pd.DataFrame(data, columns=dataset.schema.names)


def write_csv(dataset: Dataset, path: str | Path) -> None:
    """Write `dataset` atomically; load_csv reproduces it exactly."""
    path = Path(path)
    if not path.parent.exists():
        raise DataFormatError(f"cannot write {path}: directory does not exist")
    frame = to_frame(dataset)
    try:
        with atomic_write(path) as handle:
            frame.to_csv(handle, index=False, lineterminator="\n")
    except OSError as e:
        raise DataFormatError(f"cannot write {path}: {e}") from e
    logger.info("wrote %s: %d records", path, dataset.n_records)
