"""
Shared pieces of the discovery management commands: error mapping, usage
errors and the flags that mirror RunConfig fields.
"""
import argparse
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from discovery import exceptions
from discovery.config import AcceptancePolicy, ReviserMode
from discovery.msl import ModelProgram, parse, program_library


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return number


def positive_float(value: str) -> float:
    number = float(value)
    if not number > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return number


def resolve_program(value: str) -> ModelProgram:
    """A packaged program name (``wadd``) or a path to an ``.msl`` file."""
    library = program_library()
    if value in library:
        return library[value]
    path = Path(value)
    try:
        source = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise exceptions.IoError(
            f"cannot read model {path}: {exc.strerror or exc}; packaged "
            f"models are {', '.join(library)}"
        ) from exc
    return parse(source)


class DiscoveryCommand(BaseCommand):
    """
    Base command: DiscoveryErrors become CommandErrors carrying the error's
    exit code, and argument errors print the help text and exit with 1.
    """

    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def error(message):
            parser.print_help(self.stderr)
            raise CommandError(f"Error: {message}", returncode=1)

        parser.error = error
        return parser

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except exceptions.DiscoveryError as exc:
            raise CommandError(
                f"{type(exc).__name__}: {exc}", returncode=exc.exit_code
            ) from exc


def add_data_arguments(parser, reference: bool = True, required: bool = True) -> None:
    parser.add_argument(
        "--trials", required=required, help="Trials file (.csv or .json)."
    )
    if reference:
        parser.add_argument(
            "--reference",
            required=required,
            help="Reference likelihoods CSV (subject_id,trial_index,nll).",
        )
    parser.add_argument(
        "--format",
        choices=["csv", "json"],
        help="Trials file format; inferred from the extension by default.",
    )


def add_run_arguments(parser) -> None:
    """Flags mirroring RunConfig; unset flags leave the config file values."""
    parser.add_argument("--config", help="Run config file (.toml or .yaml).")
    parser.add_argument("--out", help="Output directory.")
    parser.add_argument("--threshold", type=positive_float)
    parser.add_argument("--iterations", type=positive_int)
    parser.add_argument(
        "--simulations", type=positive_int, help="Simulations per model class."
    )
    parser.add_argument("--seed", type=int)
    parser.add_argument("--restarts", type=positive_int)
    parser.add_argument("--workers", type=positive_int)
    parser.add_argument(
        "--acceptance", choices=[policy.value for policy in AcceptancePolicy]
    )
    parser.add_argument(
        "--max-points",
        type=positive_int,
        help="Regret points rendered into each prompt.",
    )
    parser.add_argument(
        "--model-classes", nargs="+", help="Starting models, e.g. wadd ttb eqw."
    )
    parser.add_argument(
        "--log-regret-points",
        action="store_true",
        help="Write every regret point to the run log.",
    )
    parser.add_argument("--reviser", choices=[mode.value for mode in ReviserMode])
    parser.add_argument("--endpoint", help="OpenAI-compatible base URL.")
    parser.add_argument("--model-name", help="Model served by the endpoint.")
    parser.add_argument(
        "--script", help="Directory of .msl responses for the scripted reviser."
    )
    parser.add_argument("--system-text", help="System message for the reviser.")
    parser.add_argument(
        "--multi-proposal",
        action="store_true",
        help="Show the reviser every earlier model of the simulation.",
    )


def run_overrides(options: dict) -> dict:
    """Config layer built from command-line flags."""
    mode = options.get("reviser")
    if mode is None and options.get("script"):
        mode = ReviserMode.SCRIPTED.value
    return {
        "trials_path": options.get("trials"),
        "reference_path": options.get("reference"),
        "trials_format": options.get("format"),
        "output_dir": options.get("out"),
        "threshold": options.get("threshold"),
        "iterations": options.get("iterations"),
        "simulations_per_class": options.get("simulations"),
        "seed": options.get("seed"),
        "restarts": options.get("restarts"),
        "workers": options.get("workers"),
        "acceptance_policy": options.get("acceptance"),
        "max_points_in_prompt": options.get("max_points"),
        "model_classes": options.get("model_classes"),
        "log_regret_points": options.get("log_regret_points") or None,
        "reviser": {
            "mode": mode,
            "endpoint_url": options.get("endpoint"),
            "model_name": options.get("model_name"),
            "script_id": options.get("script"),
            "system_text": options.get("system_text"),
            "multi_proposal": options.get("multi_proposal") or None,
        },
    }
