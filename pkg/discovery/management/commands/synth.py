from discovery.management.commands._base import (
    DiscoveryCommand,
    positive_int,
    resolve_program,
)
from discovery.synth import (
    DEFAULT_TRIALS_PER_SUBJECT,
    DEFAULT_TRUE_MODEL,
    DEFAULT_TRUE_PARAMS,
    GeneratorSpec,
    generate_files,
)


def float_list(value: str) -> tuple:
    return tuple(float(item) for item in value.split(",") if item.strip())


class Command(DiscoveryCommand):
    help = (
        "Generate synthetic participants from a ground-truth model together "
        "with the matching reference likelihoods."
    )

    def add_arguments(self, parser):
        parser.add_argument("--out", required=True, help="Output directory.")
        parser.add_argument("--subjects", type=positive_int, default=30)
        parser.add_argument(
            "--trials-per-subject", type=positive_int, default=DEFAULT_TRIALS_PER_SUBJECT
        )
        parser.add_argument("--model", default=DEFAULT_TRUE_MODEL)
        parser.add_argument(
            "--params",
            type=float_list,
            help="Comma-separated true parameters, e.g. 1.5,3.0.",
        )
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument(
            "--include-identical",
            action="store_true",
            help="Allow trials whose two options are identical.",
        )
        parser.add_argument("--format", choices=["csv", "json"], default="csv")

    def handle(self, *args, **options):
        params = options["params"]
        if params is None and options["model"] == DEFAULT_TRUE_MODEL:
            params = DEFAULT_TRUE_PARAMS
        spec = GeneratorSpec(
            true_model=resolve_program(options["model"]),
            true_params=params or (),
            num_subjects=options["subjects"],
            trials_per_subject=options["trials_per_subject"],
            seed=options["seed"],
            exclude_identical_options=not options["include_identical"],
        )
        trials_path, reference_path = generate_files(
            spec, options["out"], options["format"]
        )
        self.stdout.write(
            self.style.SUCCESS(f"Wrote {trials_path} and {reference_path}")
        )
