import os

from django.core.management.base import BaseCommand, CommandError

from apps.experiments.services import export_run, run_batch
from apps.experiments.simulation import run_scenario

from cli.common import COMMON, errInfo
from cli.h_files import dir_create, json_save

from ._scenario import scenario_or_error


class Command(BaseCommand):
    help = "Simulate a tumbling target, run the filter on synthetic camera poses and write the results."

    def add_arguments(self, parser):
        parser.add_argument("--config", help="scenario file (key=value); defaults apply when omitted")
        parser.add_argument("--out", required=True, help="output directory")
        parser.add_argument("--seed", type=int, help="override the scenario seed")
        parser.add_argument("--batch", type=int, default=0, help="run N seeds as a Monte-Carlo batch")
        parser.add_argument("--workers", type=int, default=1, help="parallel processes for --batch")

    def handle(self, *args, **options):
        scenario = scenario_or_error(options["config"], options["seed"])
        out = options["out"]

        if options["batch"] < 0 or options["workers"] < 1:
            raise CommandError(f"{errInfo(COMMON.INPUT_ERR)}: --batch must be >= 0 and --workers >= 1", returncode=COMMON.INPUT_ERR)

        if options["batch"]:
            summary = run_batch(scenario, options["batch"], options["workers"])
            dir_create(out)
            json_save(os.path.join(out, COMMON.FILE_BATCH), summary)
            for key in ("runs", "faults", "converged_within_deadline", "params_within_tolerance", "capture_within_tolerance"):
                self.stdout.write(f"{key:28s} {summary[key]}")
            self.stdout.write(self.style.SUCCESS(f"batch written to {out}"))
            return

        result = run_scenario(scenario)
        export_run(result, out)
        if result.fault:
            raise CommandError(f"{errInfo(COMMON.DIVERGED)}: partial results written to {out}", returncode=COMMON.DIVERGED)
        self.stdout.write(self.style.SUCCESS(f"{len(result.measurements)} samples written to {out}"))
