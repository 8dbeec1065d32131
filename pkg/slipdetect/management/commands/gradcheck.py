"""
Finite-difference gradient check of every differentiable op.

Usage:
    python manage.py gradcheck                  # 200 cases over all ops
    python manage.py gradcheck --ops conv2d maxpool2d --cases 40
"""

import time

from django.core.management.base import BaseCommand, CommandError

from slipdetect.exceptions import SlipDetectError
from slipdetect.gradcheck import CASES, DEFAULT_TOLERANCE, run_gradcheck


class Command(BaseCommand):
    help = "Compare analytic gradients with central differences on random small problems"

    def add_arguments(self, parser):
        parser.add_argument("--cases", type=int, default=200, help="Number of random cases")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, help="Max relative error")
        parser.add_argument("--ops", nargs="+", default=None, help=f"Subset of: {', '.join(CASES)}")

    def handle(self, *args, **options):
        start_time = time.perf_counter()
        try:
            results = run_gradcheck(
                cases=options["cases"], seed=options["seed"], tolerance=options["tolerance"], ops=options["ops"]
            )
        except SlipDetectError as exc:
            raise CommandError(exc.as_line()) from exc

        worst = {}
        for result in results:
            worst[result.op] = max(worst.get(result.op, 0.0), result.max_rel_error)
        for op, error in worst.items():
            self.stdout.write(f"op={op} max_rel_error={error:.3e}")

        failed = [r for r in results if not r.passed]
        elapsed = time.perf_counter() - start_time
        if failed:
            raise CommandError(
                f"{len(failed)} of {len(results)} gradient checks exceeded tolerance {options['tolerance']:g} "
                f"(first: {failed[0].op} case {failed[0].case})"
            )
        self.stdout.write(self.style.SUCCESS(f"{len(results)} gradient checks passed in {elapsed:.2f}s"))
