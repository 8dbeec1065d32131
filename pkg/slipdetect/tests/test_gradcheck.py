from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from slipdetect.exceptions import UsageError
from slipdetect.gradcheck import CASES, MAX_REDRAWS, run_gradcheck


class GradCheckTest(SimpleTestCase):
    def test_every_op_matches_finite_differences(self):
        results = run_gradcheck(cases=2 * len(CASES), seed=0)
        self.assertEqual({r.op for r in results}, set(CASES))
        failed = [(r.op, r.case, r.max_rel_error) for r in results if not r.passed]
        self.assertEqual(failed, [])

    def test_default_run_of_two_hundred_cases(self):
        results = run_gradcheck(cases=200, seed=0)
        self.assertEqual(len(results), 200)
        self.assertEqual({r.op for r in results}, set(CASES))
        failed = [(r.op, r.case, r.max_rel_error) for r in results if not r.passed]
        self.assertEqual(failed, [])

    def test_unknown_op(self):
        with self.assertRaises(UsageError):
            run_gradcheck(cases=1, ops=["conv3d"])

    def test_mstcn_layer_gives_up_when_every_draw_sits_on_a_kink(self):
        with mock.patch("slipdetect.gradcheck._clear_of_kinks", return_value=False) as clear:
            with self.assertRaises(UsageError) as ctx:
                CASES["mstcn_layer"](np.random.default_rng(0))
        self.assertEqual(clear.call_count, MAX_REDRAWS)
        self.assertIn("mstcn_layer", str(ctx.exception))
