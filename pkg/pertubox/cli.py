"""
Command-line front end for pertubox.

Exit codes: 0 success, 1 usage or configuration error, 2 data or
validation error.
"""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn

from pydantic import ValidationError

from pertubox import __version__
from pertubox.anonymize import (
    GeneralizationHierarchy,
    anonymized_schema,
    check_k_anonymity,
    check_l_diversity,
    check_t_closeness,
    k_anonymize,
)
from pertubox.artifact import (
    PerturbationArtifact,
    read_sidecar,
    sidecar_path,
    write_artifact,
    write_json,
)
from pertubox.config import (
    ANONYMIZATION,
    RunConfig,
    load_config_file,
    load_pyproject_defaults,
    merge_layers,
)
from pertubox.dataset import ColumnKind, ColumnRole, Dataset, Schema, load_csv
from pertubox.dimreduce import (
    DEFAULT_NMF_MAX_ITER,
    DEFAULT_NMF_TOL,
    ProjectionSpec,
    nmf_distort,
    projection_matrix,
    random_project,
    svd_distort,
)
from pertubox.errors import ConfigError, PertuboxError
from pertubox.evaluate import evaluate_pair
from pertubox.linalg import Rng
from pertubox.multidim import condense, geometric_perturb, rotate
from pertubox.registry import technique_registry
from pertubox.reporter import Reporter
from pertubox.value import (
    CategoryEstimate,
    NoiseSpec,
    ProportionEstimate,
    estimate_category_distribution,
    estimate_true_proportion,
    perturb_dataset_with_noise,
    randomize_dataset,
    reconstruct_columns,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports problems instead of exiting."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser, schema: bool = True) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--config", default=s, help="JSON file of run settings (flags win)")
    parser.add_argument("--seed", type=int, default=s, help="Seed for every random stream")
    parser.add_argument("--format", choices=["text", "json"], default=s, help="Console output")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO logs, -vv for DEBUG"
    )
    if schema:
        parser.add_argument("--schema", default=s, help="Schema JSON of the input dataset")


def _io(parser: argparse.ArgumentParser, output_help: str) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--input", default=s, help="Input CSV file")
    parser.add_argument("--output", default=s, help=output_help)


def build_parser() -> _ArgumentParser:
    s = argparse.SUPPRESS
    parser = _ArgumentParser(
        prog="pertubox",
        description="Privacy-preserving data modification: anonymize, perturb, evaluate",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"pertubox {__version__}")
    subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)

    perturb = subparsers.add_parser("perturb", help="Apply a perturbation technique")
    _common(perturb)
    _io(perturb, "Output CSV (a <output>.json sidecar is written next to it)")
    perturb.add_argument("--technique", default=s, help="Technique id or alias, e.g. rotate")
    perturb.add_argument("--emit-secret", action="store_true", default=s,
                         help="Include the secret (rotation, groups, factors) in the sidecar")
    perturb.add_argument("--sigma", type=float, default=s, help="Noise scale")
    perturb.add_argument("--noise-family", choices=["gaussian", "uniform"], default=s)
    perturb.add_argument("--theta", type=float, default=s, help="Randomized response keep rate")
    perturb.add_argument("--group-size", type=int, default=s, help="Condensation group size K")
    perturb.add_argument("--rank", type=int, default=s, help="SVD/NMF target rank")
    perturb.add_argument("--dim", type=int, default=s, help="Projection target dimension k")
    perturb.add_argument("--axis", choices=["column_wise", "row_wise"], default=s)
    perturb.add_argument("--entry-std", type=float, default=s, help="Projection entry std")
    perturb.add_argument("--max-iter", type=int, default=s, help="NMF iteration cap")
    perturb.add_argument("--tol", type=float, default=s, help="NMF relative tolerance")
    perturb.add_argument("--columns", nargs="+", default=s, help="Restrict to these columns")

    anonymize = subparsers.add_parser("anonymize", help="Enforce k-anonymity")
    _common(anonymize)
    _io(anonymize, "Output CSV of the generalized table")
    anonymize.add_argument("--technique", default=s, help="Recorded technique id")
    anonymize.add_argument("--k", type=int, default=s, help="Minimum class size")
    anonymize.add_argument("--l", type=int, default=s, help="Also require distinct l-diversity")
    anonymize.add_argument("--t", type=float, default=s, help="Also require t-closeness")
    anonymize.add_argument("--sensitive", default=s, help="Sensitive column for --l/--t")
    anonymize.add_argument("--max-suppression", type=float, default=s,
                           help="Fraction of records that may be suppressed")
    anonymize.add_argument("--hierarchies", default=s, help="Generalization hierarchy JSON")

    reconstruct = subparsers.add_parser("reconstruct", help="Reconstruct noisy distributions")
    _common(reconstruct)
    _io(reconstruct, "Density JSON (printed when omitted)")
    reconstruct.add_argument("--sigma", type=float, default=s, help="Noise scale")
    reconstruct.add_argument("--noise-family", choices=["gaussian", "uniform"], default=s)
    reconstruct.add_argument("--bins", type=int, default=s)
    reconstruct.add_argument("--tol", type=float, default=s)
    reconstruct.add_argument("--max-iter", type=int, default=s)
    reconstruct.add_argument("--max-workers", type=int, default=s)
    reconstruct.add_argument("--columns", nargs="+", default=s)

    estimate = subparsers.add_parser("estimate", help="Estimate randomized-response proportions")
    _common(estimate)
    estimate.add_argument("--input", default=s, help="CSV of randomized answers")
    estimate.add_argument("--theta", type=float, default=s, help="Keep probability used")
    estimate.add_argument("--column", default=s, help="Single column to estimate")
    estimate.add_argument("--columns", nargs="+", default=s)
    estimate.add_argument("--report", default=s, help="Write the estimates as JSON")

    evaluate = subparsers.add_parser("evaluate", help="Compare an original and modified dataset")
    _common(evaluate)
    evaluate.add_argument("--original", default=s)
    evaluate.add_argument("--modified", default=s)
    evaluate.add_argument("--modified-schema", default=s,
                          help="Schema of the modified CSV (default: from its sidecar)")
    evaluate.add_argument("--technique", default=s)
    evaluate.add_argument("--report", default=s, help="Write the report as JSON")
    for flag, kind in (("--k", int), ("--l", int), ("--t", float), ("--theta", float),
                       ("--sigma", float)):
        evaluate.add_argument(flag, type=kind, default=s)
    evaluate.add_argument("--noise-family", choices=["gaussian", "uniform"], default=s)
    evaluate.add_argument("--sensitive", default=s)

    registry = subparsers.add_parser("registry", help="Print the technique assessment registry")
    _common(registry, schema=False)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        message = str(item["msg"]).removeprefix("Value error, ")
        location = ".".join(str(p) for p in item["loc"])
        parts.append(f"{location}: {message}" if location else message)
    return "; ".join(parts)


def _load_input(config: RunConfig) -> Dataset:
    assert config.input is not None and config.schema_path is not None
    return load_csv(config.input, Schema.from_json(config.schema_path))


def _reporter(config: RunConfig) -> Reporter:
    return Reporter(use_color=sys.stdout.isatty() and config.format == "text")


def _perturb(config: RunConfig) -> int:
    dataset = _load_input(config)
    technique = config.technique
    assert technique is not None and config.output is not None
    rng = Rng(config.seed)
    summary: dict[str, Any] = {}
    secret: dict[str, Any] | None = None

    if technique == "noise_addition":
        assert config.sigma is not None
        noise = NoiseSpec(config.noise_family, config.sigma)
        modified = perturb_dataset_with_noise(dataset, noise, rng.child("noise"), config.columns)
    elif technique == "randomized_response":
        assert config.theta is not None
        modified = randomize_dataset(dataset, config.theta, rng.child("response"), config.columns)
    elif technique == "condensation":
        assert config.group_size is not None
        modified, groups = condense(dataset, config.group_size, rng.child("condensation"))
        summary["groups"] = len(groups.groups)
        secret = groups.to_dict()
    elif technique == "random_rotation":
        modified, rotation = rotate(dataset, rng.child("rotation"))
        secret = {"rotation": rotation.tolist()}
    elif technique == "geometric":
        assert config.sigma is not None
        modified, geometric = geometric_perturb(dataset, config.sigma, rng.child("geometric"))
        secret = geometric.to_dict()
    elif technique == "random_projection":
        assert config.dim is not None
        spec = ProjectionSpec(k=config.dim, axis=config.axis, entry_std=config.entry_std)
        modified = random_project(dataset, spec, rng.child("projection"))
        matrix = projection_matrix(spec, spec.source_dim(dataset), rng.child("projection"))
        secret = {"projection": spec.to_dict(), "matrix": matrix.tolist()}
    elif technique == "svd":
        assert config.rank is not None
        modified, result = svd_distort(dataset, config.rank)
        summary.update(result.to_dict())
        secret = result.to_dict(include_factors=True)
    else:
        assert config.rank is not None
        modified, result = nmf_distort(
            dataset,
            config.rank,
            rng.child("nmf"),
            max_iter=config.max_iter or DEFAULT_NMF_MAX_ITER,
            tol=DEFAULT_NMF_TOL if config.tol is None else config.tol,
        )
        summary.update(result.to_dict())
        secret = result.to_dict(include_factors=True)

    artifact = PerturbationArtifact(
        technique=technique,
        dataset=modified,
        parameters=config.parameters(),
        seed=config.seed,
        summary=summary,
        secret=secret,
    )
    sidecar = write_artifact(artifact, config.output, emit_secret=config.emit_secret)
    if config.format == "json":
        print(_reporter(config).to_json(artifact.sidecar(emit_secret=False)))
    else:
        _reporter(config).print_written(config.output, str(sidecar))
    return EXIT_OK


def _sensitive(schema: Schema, config: RunConfig) -> str:
    if config.sensitive:
        return config.sensitive
    sensitive = schema.with_role(ColumnRole.SENSITIVE)
    if not sensitive:
        raise ConfigError("--l/--t need --sensitive or a sensitive column in the schema")
    return sensitive[0].name


def _anonymize(config: RunConfig) -> int:
    dataset = _load_input(config)
    assert config.k is not None and config.output is not None
    hierarchies = (
        GeneralizationHierarchy.from_json(config.hierarchies) if config.hierarchies else None
    )
    table = k_anonymize(dataset, config.k, hierarchies, config.max_suppression)

    summary: dict[str, Any] = {
        "k_anonymous": check_k_anonymity(table, config.k).holds,
        "equivalence_classes": len(table.equivalence_classes),
        "suppressed": table.suppressed_count,
    }
    failures = []
    if config.l is not None:
        verdict = check_l_diversity(table, _sensitive(dataset.schema, config), config.l)
        summary["l_diverse"] = verdict.holds
        if not verdict.holds:
            failures.append(f"l-diversity (l={config.l}) fails for classes {list(verdict.failing)}")
    if config.t is not None:
        closeness = check_t_closeness(table, _sensitive(dataset.schema, config), config.t)
        summary["t_close"] = closeness.holds
        if not closeness.holds:
            failures.append(
                f"t-closeness (t={config.t}) fails for classes {list(closeness.failing)}"
            )

    reporter = _reporter(config)
    if config.format == "text":
        reporter.print_anonymization(summary)
    if failures:
        raise PertuboxError("; ".join(failures))

    if config.technique in ANONYMIZATION:
        technique = config.technique
    elif config.t is not None:
        technique = "t_closeness"
    elif config.l is not None:
        technique = "l_diversity"
    else:
        technique = "k_anonymity"
    artifact = PerturbationArtifact(
        technique=technique,
        dataset=table.to_dataset(),
        parameters=config.parameters(),
        summary=summary,
    )
    sidecar = write_artifact(artifact, config.output, emit_secret=False)
    if config.format == "json":
        print(reporter.to_json(artifact.sidecar()))
    else:
        reporter.print_written(config.output, str(sidecar))
    return EXIT_OK


def _reconstruct(config: RunConfig) -> int:
    dataset = _load_input(config)
    assert config.sigma is not None
    densities = reconstruct_columns(
        dataset,
        NoiseSpec(config.noise_family, config.sigma),
        columns=config.columns,
        bins=config.bins,
        tol=config.reconstruction_tol(),
        max_iter=config.reconstruction_max_iter(),
        max_workers=config.max_workers,
    )
    reporter = _reporter(config)
    if config.output:
        write_json({name: d.to_dict() for name, d in densities.items()}, config.output)
    if config.format == "json" and not config.output:
        print(reporter.densities_to_json(densities))
    elif config.format == "text":
        reporter.print_densities(densities)
        if config.output:
            reporter.print_written(config.output)
    return EXIT_OK


def _estimate(config: RunConfig) -> int:
    dataset = _load_input(config)
    assert config.theta is not None
    if config.column:
        names = [config.column]
    else:
        names = list(config.columns) if config.columns else dataset.schema.label_names
    if not names:
        raise ConfigError("estimate needs a boolean or categorical column")

    estimates: dict[str, ProportionEstimate | CategoryEstimate] = {}
    for name in names:
        kind = dataset.schema.column(name).kind
        if kind == ColumnKind.BOOLEAN:
            estimates[name] = estimate_true_proportion(dataset.boolean_column(name), config.theta)
        elif kind == ColumnKind.CATEGORICAL:
            values = dataset.labels[name]
            estimates[name] = estimate_category_distribution(
                values, sorted(set(values)), config.theta
            )
        else:
            raise ConfigError(f"column '{name}' is numeric; estimate reads randomized labels")

    reporter = _reporter(config)
    if config.report:
        write_json({name: e.to_dict() for name, e in estimates.items()}, config.report)
    if config.format == "json":
        print(reporter.estimates_to_json(estimates))
    else:
        reporter.print_estimates(estimates)
    return EXIT_OK


def _modified_schema(config: RunConfig, schema: Schema) -> tuple[Schema, dict[str, Any]]:
    assert config.modified is not None
    if config.modified_schema:
        return Schema.from_json(config.modified_schema), {}
    path = sidecar_path(config.modified)
    if path.exists():
        sidecar = read_sidecar(path)
        return Schema.from_dict({"columns": sidecar["columns"]}), dict(sidecar["parameters"])
    if config.technique in ANONYMIZATION:
        return anonymized_schema(schema), {}
    return schema, {}


def _evaluate(config: RunConfig) -> int:
    assert config.original is not None and config.schema_path is not None
    assert config.modified is not None and config.technique is not None
    schema = Schema.from_json(config.schema_path)
    original = load_csv(config.original, schema)
    modified_schema, params = _modified_schema(config, schema)
    modified = load_csv(config.modified, modified_schema)

    for name in ("k", "l", "t", "sensitive", "theta", "sigma"):
        if getattr(config, name) is not None:
            params[name] = getattr(config, name)
    if config.sigma is not None or "noise_family" not in params:
        params["noise_family"] = config.noise_family

    report = evaluate_pair(original, modified, config.technique, params=params, seed=config.seed)
    reporter = _reporter(config)
    if config.report:
        write_json(report.to_dict(), config.report)
    if config.format == "json":
        print(reporter.evaluation_to_json(report))
    else:
        reporter.print_evaluation(report)
    return EXIT_OK


def _registry(config: RunConfig) -> int:
    reporter = _reporter(config)
    entries = technique_registry()
    if config.format == "json":
        print(reporter.registry_to_json(entries))
    else:
        reporter.print_registry(entries)
    return EXIT_OK


_COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "perturb": _perturb,
    "anonymize": _anonymize,
    "reconstruct": _reconstruct,
    "estimate": _estimate,
    "evaluate": _evaluate,
    "registry": _registry,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Run one pertubox command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"pertubox: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    flags = vars(args)
    _configure_logging(flags.pop("verbose", 0))
    config_file = flags.pop("config", None)

    try:
        layers = [load_pyproject_defaults()]
        if config_file:
            layers.append(load_config_file(config_file))
        layers.append(flags)
        config = RunConfig.model_validate(merge_layers(*layers))
    except ConfigError as e:
        print(f"pertubox: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(f"pertubox: error: {_validation_message(e)}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return _COMMANDS[config.command](config)
    except ConfigError as e:
        print(f"pertubox: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PertuboxError as e:
        print(f"pertubox: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"pertubox: error: {e}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    """CLI entry point."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
