import json

from discovery.conf import asmr_settings
from discovery.data import load_trials
from discovery.fitting import fit_subjects, mean_aic
from discovery.management.commands._base import (
    DiscoveryCommand,
    add_data_arguments,
    positive_int,
    resolve_program,
)
from discovery.msl import typecheck
from discovery.serializers import FitResultSerializer


class Command(DiscoveryCommand):
    help = "Fit one model to every subject and print per-subject and mean AIC."

    def add_arguments(self, parser):
        parser.add_argument(
            "--model",
            required=True,
            help="Packaged model name (wadd, ttb, eqw, adaptive) or .msl file.",
        )
        add_data_arguments(parser, reference=False)
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--restarts", type=positive_int, default=None)
        parser.add_argument("--workers", type=positive_int, default=None)
        parser.add_argument(
            "--json", action="store_true", help="Print the fits as JSON."
        )

    def handle(self, *args, **options):
        program = resolve_program(options["model"])
        trials = load_trials(options["trials"], options["format"])
        typed = typecheck(program, trials.num_features)
        fits = fit_subjects(
            typed,
            trials,
            seed=options["seed"] if options["seed"] is not None else asmr_settings.SEED,
            restarts=options["restarts"] or asmr_settings.RESTARTS,
            workers=options["workers"] or asmr_settings.WORKERS,
        )

        if options["json"]:
            self.stdout.write(
                json.dumps(FitResultSerializer(fits, many=True).data, indent=2)
            )
        else:
            self.stdout.write(f"{'subject':<12} {'k':>2} {'nll':>12} {'aic':>12}")
            for fit in fits:
                self.stdout.write(
                    f"{fit.subject_id:<12} {fit.num_parameters:>2} "
                    f"{fit.total_nll:>12.4f} {fit.aic:>12.4f}"
                )
        self.stdout.write(self.style.SUCCESS(f"mean AIC: {mean_aic(fits):.4f}"))
