"""
Perturbation artifacts: the modified dataset plus the metadata needed to
verify it later.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from pertubox.dataset import Dataset, atomic_write, write_csv
from pertubox.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class PerturbationArtifact:
    """
    Output of one perturbation run.

    summary holds non-secret facts about the run (iterations, suppressed
    records, residual norms). secret holds what would let someone undo the
    perturbation (rotation matrices, group statistics, factors) and is only
    written when explicitly requested.
    """

    technique: str
    dataset: Dataset
    parameters: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    summary: dict[str, Any] = field(default_factory=dict)
    secret: dict[str, Any] | None = None

    def sidecar(self, emit_secret: bool = False) -> dict[str, Any]:
        data: dict[str, Any] = {
            "technique": self.technique,
            "parameters": self.parameters,
            "seed": self.seed,
            "n_records": self.dataset.n_records,
            "columns": self.dataset.schema.to_dict()["columns"],
            "summary": self.summary,
        }
        if emit_secret and self.secret is not None:
            data["secret"] = self.secret
        return data


def sidecar_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".json")


def write_json(data: Any, path: str | Path) -> None:
    with atomic_write(path) as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def write_artifact(artifact: PerturbationArtifact, output: str | Path, emit_secret: bool) -> Path:
    """
    Write the CSV and its `<output>.json` sidecar; returns the sidecar path.

    The sidecar goes first and is removed again if the CSV cannot be written,
    so a failed run never leaves a CSV without its sidecar.
    """
    path = sidecar_path(output)
    write_json(artifact.sidecar(emit_secret=emit_secret), path)
    try:
        write_csv(artifact.dataset, output)
    except BaseException:
        path.unlink(missing_ok=True)
        raise
    logger.info("wrote %s and %s", output, path)
    return path


def read_sidecar(path: str | Path) -> dict[str, Any]:
    """Load a sidecar written by write_artifact."""
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, dict) or "technique" not in data:
        raise ConfigError(f"{path}: not a pertubox sidecar")
    return data
