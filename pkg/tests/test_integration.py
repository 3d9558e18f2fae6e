"""
Integration tests for the full pertubox workflow through `python -m pertubox`.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from pertubox.dataset import Dataset, Schema, write_csv

ROOT = Path(__file__).parent.parent

SCHEMA = {
    "columns": [
        {"name": "x", "kind": "numeric"},
        {"name": "y", "kind": "numeric"},
        {"name": "z", "kind": "numeric"},
        {"name": "w", "kind": "numeric"},
    ]
}


def _pertubox(*args: str) -> subprocess.CompletedProcess[str]:
    return subprocess.run(
        [sys.executable, "-m", "pertubox", *args],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )


def _dataset(directory: Path, n: int = 120) -> tuple[Path, Path]:
    records = np.random.default_rng(21).uniform(size=(n, 4))
    data = directory / "original.csv"
    schema = directory / "schema.json"
    write_csv(Dataset(schema=Schema.from_dict(SCHEMA), numeric=records.T), data)
    schema.write_text(json.dumps(SCHEMA))
    return data, schema


def test_cli_perturb_and_evaluate_geometric():
    """Test perturbing and evaluating in separate processes."""
    with tempfile.TemporaryDirectory() as tmpdir:
        data, schema = _dataset(Path(tmpdir))
        output = Path(tmpdir) / "geometric.csv"
        result = _pertubox(
            "perturb", "--technique", "geometric", "--sigma", "0", "--input", str(data),
            "--schema", str(schema), "--output", str(output), "--seed", "5",
        )
        assert result.returncode == 0, result.stderr

        result = _pertubox(
            "evaluate", "--original", str(data), "--modified", str(output), "--schema",
            str(schema), "--technique", "geometric", "--format", "json",
        )
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["shapes_comparable"] is True
        assert report["preserved_property_verdicts"] == {"isometry": True}


def test_cli_projection_sidecar_schema():
    """Test that evaluate reads the projected schema from the sidecar."""
    with tempfile.TemporaryDirectory() as tmpdir:
        data, schema = _dataset(Path(tmpdir))
        output = Path(tmpdir) / "projected.csv"
        result = _pertubox(
            "perturb", "--technique", "random_projection", "--dim", "2", "--input", str(data),
            "--schema", str(schema), "--output", str(output), "--format", "json",
        )
        assert result.returncode == 0, result.stderr
        sidecar = json.loads(result.stdout)
        assert [c["name"] for c in sidecar["columns"]] == ["p0", "p1"]
        assert output.read_text().splitlines()[0] == "p0,p1"

        result = _pertubox(
            "evaluate", "--original", str(data), "--modified", str(output), "--schema",
            str(schema), "--technique", "project", "--format", "json",
        )
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["shapes_comparable"] is False
        assert report["privacy_loss"]["value_difference"] is None


def test_cli_noise_reconstruction_round_trip():
    """Test noise addition followed by reconstruction of each column."""
    with tempfile.TemporaryDirectory() as tmpdir:
        data, schema = _dataset(Path(tmpdir))
        noisy = Path(tmpdir) / "noisy.csv"
        result = _pertubox(
            "perturb", "--technique", "noise", "--sigma", "0.1", "--input", str(data),
            "--schema", str(schema), "--output", str(noisy),
        )
        assert result.returncode == 0, result.stderr

        result = _pertubox(
            "reconstruct", "--sigma", "0.1", "--bins", "30", "--input", str(noisy),
            "--schema", str(schema), "--format", "json",
        )
        assert result.returncode == 0, result.stderr
        densities = json.loads(result.stdout)
        assert list(densities) == ["x", "y", "z", "w"]
        for density in densities.values():
            assert abs(sum(density["probabilities"]) - 1.0) < 1e-9


def test_cli_registry_text():
    """Test the human-readable registry table."""
    result = _pertubox("registry")
    assert result.returncode == 0
    assert "random_rotation" in result.stdout
    assert "Geometrical characteristic" in result.stdout


def test_cli_usage_error_exit_code():
    """Test that a missing required flag exits with code 1."""
    result = _pertubox("evaluate", "--technique", "svd")
    assert result.returncode == 1
    assert "evaluate needs" in result.stderr
