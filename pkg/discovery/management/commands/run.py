from pathlib import Path

from discovery.engine import build_run_config, run_simulation
from discovery.management.commands._base import (
    DiscoveryCommand,
    add_data_arguments,
    add_run_arguments,
    resolve_program,
    run_overrides,
)
from discovery.reports import write_experiment


class Command(DiscoveryCommand):
    help = "Run one simulation of the discovery loop and write its reports."

    def add_arguments(self, parser):
        add_data_arguments(parser, required=False)
        add_run_arguments(parser)
        start = parser.add_mutually_exclusive_group()
        start.add_argument(
            "--model-class",
            help="Starting model; defaults to the first configured class.",
        )
        start.add_argument(
            "--model",
            help="Start from a packaged model or an .msl file, labelled by its name.",
        )
        parser.add_argument("--simulation", type=int, default=0)

    def handle(self, *args, **options):
        config = build_run_config(
            run_overrides(options), config_path=options["config"]
        )
        start_model = None
        if options["model"]:
            start_model = resolve_program(options["model"])
            model_class = Path(options["model"]).stem
        else:
            model_class = options["model_class"] or config.model_classes[0]
        simulation = run_simulation(
            config, model_class, options["simulation"], start_model=start_model
        )
        write_experiment(
            [simulation], config.as_dict(), config.output_dir, config.log_regret_points
        )

        for record in simulation.records:
            self.stdout.write(
                f"iteration {record.iteration_index}: mean AIC "
                f"{record.mean_aic:.4f}, regret {record.regret_size}"
            )
        self.stdout.write(
            self.style.SUCCESS(
                f"Best mean AIC {simulation.best_mean_aic:.4f}; "
                f"reports in {config.output_dir}"
            )
        )
