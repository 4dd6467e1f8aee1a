from django.core.management.base import BaseCommand, CommandError

from apps.experiments.checks import run_checks

from cli.common import COMMON, errInfo


class Command(BaseCommand):
    help = "Run the numerical self-checks and print a pass/fail table."

    def handle(self, *args, **options):
        results = run_checks()
        self.stdout.write(f"{'check':20s} {'max error':>12s} {'tolerance':>12s}  result")
        for r in results:
            status = self.style.SUCCESS("pass") if r.passed else self.style.ERROR("FAIL")
            self.stdout.write(f"{r.name:20s} {r.max_error:12.3e} {r.tolerance:12.1e}  {status}")

        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f"{errInfo(COMMON.VALIDATION_FAIL)}: " + ", ".join(failed), returncode=COMMON.VALIDATION_FAIL)
        self.stdout.write(self.style.SUCCESS(f"all {len(results)} checks passed"))
