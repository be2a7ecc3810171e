from pathlib import Path

from discovery.management.commands._base import DiscoveryCommand
from discovery.reports import aggregate, read_run_log, write_report


class Command(DiscoveryCommand):
    help = "Re-aggregate an existing run log into the report files."

    def add_arguments(self, parser):
        parser.add_argument("--log", required=True, help="Path to run_log.jsonl.")
        parser.add_argument(
            "--out", help="Output directory; defaults to the log's directory."
        )

    def handle(self, *args, **options):
        log_path = Path(options["log"])
        config, summaries, reference_aics = read_run_log(log_path)
        report = aggregate(summaries, config, reference_aics)
        out_dir = write_report(report, options["out"] or log_path.parent)
        self.stdout.write(
            self.style.SUCCESS(
                f"Aggregated {len(summaries)} iterations into {out_dir}"
            )
        )
