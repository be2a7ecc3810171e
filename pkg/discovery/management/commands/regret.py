import json

from discovery.conf import asmr_settings
from discovery.data import load_reference, load_trials
from discovery.fitting import fit_subjects
from discovery.management.commands._base import (
    DiscoveryCommand,
    add_data_arguments,
    positive_float,
    positive_int,
    resolve_program,
)
from discovery.msl import typecheck
from discovery.regret import compute_regret
from discovery.serializers import RegretSetSerializer


class Command(DiscoveryCommand):
    help = (
        "Fit a model and print, as JSON, the trials where the reference "
        "likelihoods beat it by at least the threshold."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--model",
            required=True,
            help="Packaged model name (wadd, ttb, eqw, adaptive) or .msl file.",
        )
        add_data_arguments(parser)
        parser.add_argument("--threshold", type=positive_float, default=None)
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--restarts", type=positive_int, default=None)
        parser.add_argument(
            "--limit", type=positive_int, default=None,
            help="Print only the highest-delta points.",
        )

    def handle(self, *args, **options):
        program = resolve_program(options["model"])
        trials = load_trials(options["trials"], options["format"])
        reference = load_reference(options["reference"], trials)
        fits = fit_subjects(
            typecheck(program, trials.num_features),
            trials,
            seed=options["seed"] if options["seed"] is not None else asmr_settings.SEED,
            restarts=options["restarts"] or asmr_settings.RESTARTS,
            workers=asmr_settings.WORKERS,
        )
        regret = compute_regret(
            fits, reference, trials, options["threshold"] or asmr_settings.THRESHOLD
        )

        data = RegretSetSerializer(regret).data
        if options["limit"]:
            data["points"] = data["points"][: options["limit"]]
        self.stdout.write(json.dumps(data, indent=2))
        self.stdout.write(
            self.style.SUCCESS(
                f"{len(regret)} of {len(trials)} trials in the regret set"
            )
        )
