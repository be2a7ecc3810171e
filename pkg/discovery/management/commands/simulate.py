from discovery.engine import build_run_config, run_experiment
from discovery.management.commands._base import (
    DiscoveryCommand,
    add_data_arguments,
    add_run_arguments,
    run_overrides,
)
from discovery.reports import write_experiment


class Command(DiscoveryCommand):
    help = (
        "Run every configured model class for the configured number of "
        "simulations and write the aggregated reports."
    )

    def add_arguments(self, parser):
        add_data_arguments(parser, required=False)
        add_run_arguments(parser)

    def handle(self, *args, **options):
        config = build_run_config(
            run_overrides(options), config_path=options["config"]
        )
        simulations = run_experiment(config)
        report = write_experiment(
            simulations, config.as_dict(), config.output_dir, config.log_regret_points
        )

        summary = report.as_dict()
        final = summary["final"]
        self.stdout.write(
            f"{len(simulations)} simulations; final mean AIC "
            f"{final['mean_aic']:.4f} (SD {final['sd_aic']:.4f})"
        )
        reference = summary["reference"]
        if reference:
            self.stdout.write(
                f"reference predictor mean AIC {reference['mean_aic']:.4f}; "
                f"final gap {reference['final_gap']:.4f}"
            )
        self.stdout.write(
            self.style.SUCCESS(
                f"Best mean AIC {report.best.mean_aic:.4f} "
                f"({report.best.model_filename}); reports in {config.output_dir}"
            )
        )
