"""
Reporter for pertubox results.
"""

import json
from collections.abc import Mapping, Sequence
from typing import Any, TextIO

from pertubox.evaluate import EvaluationReport
from pertubox.registry import TechniqueRegistryEntry
from pertubox.value import CategoryEstimate, DensityEstimate, ProportionEstimate


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6g}"


class Reporter:
    """Formats and outputs pertubox reports."""

    def __init__(self, use_color: bool = True, stream: TextIO | None = None):
        self.use_color = use_color
        self.stream = stream

    def _green(self, text: str) -> str:
        if self.use_color:
            return f"\033[92m{text}\033[0m"
        return text

    def _red(self, text: str) -> str:
        if self.use_color:
            return f"\033[91m{text}\033[0m"
        return text

    def _bold(self, text: str) -> str:
        if self.use_color:
            return f"\033[1m{text}\033[0m"
        return text

    def _dim(self, text: str) -> str:
        if self.use_color:
            return f"\033[2m{text}\033[0m"
        return text

    def _print(self, text: str = "") -> None:
        print(text, file=self.stream)

    def print_evaluation(self, report: EvaluationReport) -> None:
        """Print metric values and preserved-property verdicts."""
        data = report.to_dict()
        self._print(f"{self._bold('Evaluation:')} {report.technique}")
        if not report.shapes_comparable:
            self._print(f"  {self._dim('shapes differ; value-level metrics not comparable')}")
        for section in ("privacy_loss", "information_loss"):
            self._print(f"\n  {self._bold(section.replace('_', ' ').capitalize() + ':')}")
            for name, value in data[section].items():
                self._print(f"    {name}: {_fmt(value)}")

        if report.preserved_property_verdicts:
            self._print(f"\n  {self._bold('Preserved properties:')}")
            for name, holds in sorted(report.preserved_property_verdicts.items()):
                status = self._green("✓") if holds else self._red("✗")
                self._print(f"    {status} {name}")
        if report.technique_metrics:
            self._print(f"\n  {self._bold('Technique metrics:')}")
            for name, value in sorted(report.technique_metrics.items()):
                self._print(f"    {name}: {_fmt(value)}")

    def print_densities(self, densities: Mapping[str, DensityEstimate]) -> None:
        self._print(self._bold("Reconstructed distributions:"))
        for name, estimate in densities.items():
            lo, hi = estimate.support
            mode = float(estimate.centers[int(estimate.probabilities.argmax())])
            state = "converged" if estimate.converged else self._red("not converged")
            self._print(
                f"  {name}: support [{lo:.4g}, {hi:.4g}], {len(estimate.probabilities)} bins, "
                f"mode {mode:.4g} {self._dim(f'({estimate.iterations} iterations, {state})')}"
            )

    def print_estimates(
        self, estimates: Mapping[str, ProportionEstimate | CategoryEstimate]
    ) -> None:
        self._print(self._bold("Estimated true distributions:"))
        for name, estimate in estimates.items():
            note = self._dim(" (clamped)") if estimate.clamped else ""
            if isinstance(estimate, ProportionEstimate):
                self._print(
                    f"  {name}: P(true) = {estimate.estimate:.4f} "
                    f"± {estimate.standard_error:.4f}{note}"
                )
                continue
            self._print(f"  {name}:{note}")
            for category, p, se in zip(
                estimate.categories, estimate.estimates, estimate.standard_errors
            ):
                self._print(f"    {category}: {p:.4f} ± {se:.4f}")

    def print_anonymization(self, summary: Mapping[str, Any]) -> None:
        self._print(self._bold("Anonymization:"))
        for name, value in summary.items():
            if isinstance(value, bool):
                rendered = self._green("holds") if value else self._red("fails")
            else:
                rendered = str(value)
            self._print(f"  {name}: {rendered}")

    def print_registry(self, entries: Sequence[TechniqueRegistryEntry]) -> None:
        self._print(f"  {'Technique':<22} {'Privacy':>10} {'Info loss':>10} {'Dim':>6}  Preserved")
        self._print(f"  {'-' * 22} {'-' * 10} {'-' * 10} {'-' * 6}  {'-' * 26}")
        for e in entries:
            self._print(
                f"  {e.technique:<22} {e.privacy_loss_label:>10} "
                f"{e.information_loss_label:>10} {e.data_dimension:>6}  {e.preserved_property}"
            )

    def print_written(self, *paths: str) -> None:
        for path in paths:
            self._print(f"{self._green('✓')} wrote {path}")

    def to_json(self, data: Any) -> str:
        return json.dumps(data, indent=2)

    def evaluation_to_json(self, report: EvaluationReport) -> str:
        return self.to_json(report.to_dict())

    def densities_to_json(self, densities: Mapping[str, DensityEstimate]) -> str:
        return self.to_json({name: d.to_dict() for name, d in densities.items()})

    def estimates_to_json(
        self, estimates: Mapping[str, ProportionEstimate | CategoryEstimate]
    ) -> str:
        return self.to_json({name: e.to_dict() for name, e in estimates.items()})

    def registry_to_json(self, entries: Sequence[TechniqueRegistryEntry]) -> str:
        return self.to_json([e.to_dict() for e in entries])
