"""
Run configuration: pyproject defaults, JSON config files and command-line
flags merged into one validated RunConfig.
"""

import json
import logging
import sys
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from pertubox.errors import ConfigError, UnknownTechniqueError
from pertubox.registry import resolve_technique
from pertubox.value import DEFAULT_BINS, DEFAULT_MAX_ITER, DEFAULT_TOL

logger = logging.getLogger(__name__)

Command = Literal["perturb", "anonymize", "reconstruct", "estimate", "evaluate", "registry"]

PYPROJECT_KEYS = frozenset({"seed", "bins", "tol", "max_iter", "max_workers"})

ANONYMIZATION = frozenset({"k_anonymity", "l_diversity", "t_closeness"})

# Parameters each perturbation technique cannot run without.
_REQUIRED_PARAMETERS: dict[str, tuple[str, ...]] = {
    "noise_addition": ("sigma",),
    "randomized_response": ("theta",),
    "condensation": ("group_size",),
    "random_rotation": (),
    "geometric": ("sigma",),
    "random_projection": ("dim",),
    "nmf": ("rank",),
    "svd": ("rank",),
}

_REQUIRED_PATHS: dict[str, tuple[str, ...]] = {
    "perturb": ("input", "schema_path", "output", "technique"),
    "anonymize": ("input", "schema_path", "output", "k"),
    "reconstruct": ("input", "schema_path", "sigma"),
    "estimate": ("input", "schema_path", "theta"),
    "evaluate": ("original", "modified", "schema_path", "technique"),
    "registry": (),
}


class RunConfig(BaseModel):
    """Everything one CLI invocation needs. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    command: Command
    technique: str | None = None

    input: str | None = None
    output: str | None = None
    schema_path: str | None = Field(default=None, alias="schema")
    original: str | None = None
    modified: str | None = None
    modified_schema: str | None = None
    report: str | None = None
    hierarchies: str | None = None

    seed: int = 0
    emit_secret: bool = False
    format: Literal["text", "json"] = "text"

    k: int | None = Field(default=None, ge=1)
    l: int | None = Field(default=None, ge=1)  # noqa: E741
    t: float | None = Field(default=None, ge=0.0, le=1.0)
    sensitive: str | None = None
    max_suppression: float = Field(default=0.0, ge=0.0, le=1.0)

    theta: float | None = Field(default=None, ge=0.0, le=1.0)
    sigma: float | None = Field(default=None, ge=0.0)
    noise_family: Literal["gaussian", "uniform"] = "gaussian"
    bins: int = Field(default=DEFAULT_BINS, ge=2)
    tol: float | None = Field(default=None, ge=0.0)
    max_iter: int | None = Field(default=None, ge=1)
    max_workers: int | None = Field(default=None, ge=1)

    group_size: int | None = Field(default=None, ge=1)
    rank: int | None = Field(default=None, ge=1)
    dim: int | None = Field(default=None, ge=1)
    axis: Literal["column_wise", "row_wise"] = "column_wise"
    entry_std: float = Field(default=1.0, gt=0.0)

    columns: list[str] | None = None
    column: str | None = None

    @field_validator("seed")
    @classmethod
    def _seed_fits_64_bits(cls, value: int) -> int:
        if not -(2**63) <= value < 2**64:
            raise ValueError("seed must fit in 64 bits")
        return value

    @field_validator("technique")
    @classmethod
    def _known_technique(cls, value: str | None) -> str | None:
        if value is None:
            return None
        try:
            return resolve_technique(value)
        except UnknownTechniqueError as e:
            raise ValueError(str(e)) from None

    @model_validator(mode="after")
    def _required_for_command(self) -> "RunConfig":
        missing = [
            name for name in _REQUIRED_PATHS[self.command] if getattr(self, name) is None
        ]
        if missing:
            flags = ", ".join(_flag(name) for name in missing)
            raise ValueError(f"{self.command} needs {flags}")
        if self.command == "perturb" and self.technique is not None:
            if self.technique in ANONYMIZATION:
                raise ValueError(f"{self.technique} is applied with the anonymize command")
            absent = [p for p in _REQUIRED_PARAMETERS[self.technique] if getattr(self, p) is None]
            if absent:
                flags = ", ".join(_flag(name) for name in absent)
                raise ValueError(f"technique {self.technique} needs {flags}")
        return self

    def reconstruction_tol(self) -> float:
        return DEFAULT_TOL if self.tol is None else self.tol

    def reconstruction_max_iter(self) -> int:
        return DEFAULT_MAX_ITER if self.max_iter is None else self.max_iter

    def parameters(self) -> dict[str, Any]:
        """Technique parameters worth recording next to an output."""
        names = ["k", "l", "t", "sensitive", "max_suppression", "theta", "sigma",
                 "group_size", "rank", "dim", "tol", "max_iter", "columns"]
        data = {name: getattr(self, name) for name in names if getattr(self, name) is not None}
        if self.sigma is not None:
            data["noise_family"] = self.noise_family
        if self.technique == "random_projection":
            data["axis"] = self.axis
            data["entry_std"] = self.entry_std
        if self.command != "anonymize":
            data.pop("max_suppression", None)
        return data


def _flag(name: str) -> str:
    if name == "schema_path":
        return "--schema"
    return "--" + name.replace("_", "-")


def load_pyproject_defaults(directory: Path | None = None) -> dict[str, Any]:
    """
    Read [tool.pertubox] from pyproject.toml in `directory` (the working
    directory by default). Only keys usable as run defaults are kept.
    """
    pyproject = (directory or Path.cwd()) / "pyproject.toml"
    if not pyproject.exists():
        return {}
    try:
        with open(pyproject, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        logger.warning("ignoring %s: %s", pyproject, e)
        return {}
    table = data.get("tool", {}).get("pertubox", {})
    ignored = sorted(set(table) - PYPROJECT_KEYS)
    if ignored:
        logger.warning("ignoring [tool.pertubox] keys: %s", ", ".join(ignored))
    return {key: value for key, value in table.items() if key in PYPROJECT_KEYS}


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a JSON config file holding a single object of RunConfig keys."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in data.items()}


def merge_layers(*layers: Mapping[str, Any]) -> dict[str, Any]:
    """Later layers win; a `schema_path` key and its `schema` alias are one key."""
    merged: dict[str, Any] = {}
    for layer in layers:
        for key, value in layer.items():
            merged["schema" if key == "schema_path" else key] = value
    return merged
