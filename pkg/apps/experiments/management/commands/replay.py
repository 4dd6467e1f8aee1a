from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.services import export_run, load_measurement_log, load_truth_log, replay

from cli.common import COMMON, errInfo

from ._scenario import scenario_or_error


class Command(BaseCommand):
    help = "Run the filter over a logged measurement series."

    def add_arguments(self, parser):
        parser.add_argument("--log", required=True, help="measurement CSV (t, r_c, mu, valid)")
        parser.add_argument("--config", help="scenario file with the filter settings")
        parser.add_argument("--out", required=True, help="output directory")
        parser.add_argument("--truth", help="truth CSV for truth-relative metrics")

    def handle(self, *args, **options):
        scenario = scenario_or_error(options["config"])
        try:
            measurements = load_measurement_log(options["log"])
            truth = load_truth_log(options["truth"]) if options["truth"] else None
            result = replay(scenario, measurements, truth)
        except ValidationError as exc:
            raise CommandError(f"{errInfo(COMMON.INPUT_ERR)}: " + "\n".join(exc.messages), returncode=COMMON.INPUT_ERR)
        except ValueError as exc:
            raise CommandError(f"{errInfo(COMMON.INPUT_ERR)}: {exc}", returncode=COMMON.INPUT_ERR)

        export_run(result, options["out"], include_truth=False)
        if result.fault:
            raise CommandError(f"{errInfo(COMMON.DIVERGED)} during replay", returncode=COMMON.DIVERGED)
        self.stdout.write(
            self.style.SUCCESS(f"{result.metrics['updates']} updates over {len(measurements)} samples")
        )
