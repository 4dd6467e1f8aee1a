import json
import os
import tempfile
from dataclasses import replace
from io import StringIO
from unittest import mock

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.experiments.simulation import run_scenario
from apps.tracking import ekf

from cli.common import COMMON, errInfo

from .helpers import short_scenario

TINY = """duration_s=4
filter_start_s=1
capture_time_s=4
param_check_time_s=4
occlusions_s=2-2.5
"""

LOG_HEADER = "t,r_c_x,r_c_y,r_c_z,mu_x,mu_y,mu_z,mu_w,valid\n"
SCENARIOS = os.path.join(settings.BASE_DIR, "scenarios")

_sensitivity = ekf.sensitivity_matrix


def flipped_sensitivity(state, *args, **kwargs):
    H = _sensitivity(state, *args, **kwargs).copy()
    H[0:3, 0:3] *= -1.0
    return H


def write(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, "w") as f:
        f.write(text)
    return path


def line_count(path):
    with open(path) as f:
        return len(f.read().splitlines())


class ErrorTextTests(SimpleTestCase):
    def test_exit_codes_have_names(self):
        self.assertEqual(errInfo(COMMON.INPUT_ERR), "Input error")
        self.assertEqual(errInfo(COMMON.DIVERGED), "Filter diverged")
        self.assertEqual(errInfo(COMMON.VALIDATION_FAIL), "Validation failed")
        self.assertEqual(errInfo(7), "7")


class ValidateCommandTests(SimpleTestCase):
    def test_all_checks_pass(self):
        out = StringIO()
        call_command("validate", stdout=out)
        self.assertIn("checks passed", out.getvalue())
        self.assertNotIn("FAIL", out.getvalue())

    def test_broken_sensitivity_fails(self):
        out = StringIO()
        with mock.patch("apps.tracking.ekf.sensitivity_matrix", flipped_sensitivity):
            with self.assertRaises(CommandError) as ctx:
                call_command("validate", stdout=out)
        self.assertEqual(ctx.exception.returncode, COMMON.VALIDATION_FAIL)
        self.assertIn("sensitivity_fd", str(ctx.exception))


class SimulateCommandTests(SimpleTestCase):
    def test_writes_run_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "tiny.cfg", TINY)
            out_dir = os.path.join(tmp, "out")
            call_command("simulate", config=config, out=out_dir, seed=3, stdout=StringIO())
            self.assertEqual(
                sorted(os.listdir(out_dir)), ["estimate.csv", "measurements.csv", "metrics.json", "truth.csv"]
            )
            self.assertEqual(line_count(os.path.join(out_dir, "truth.csv")), 10)
            with open(os.path.join(out_dir, "metrics.json")) as f:
                metrics = json.load(f)
        self.assertEqual(metrics["seed"], 3)
        self.assertEqual(metrics["samples"], 9)

    def test_zero_duration(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "empty.cfg", "duration_s=0\nocclusions_s=\n")
            out_dir = os.path.join(tmp, "out")
            call_command("simulate", config=config, out=out_dir, stdout=StringIO())
            for name in ("estimate.csv", "truth.csv", "measurements.csv"):
                self.assertEqual(line_count(os.path.join(out_dir, name)), 1)

    def test_overlapping_windows(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "bad.cfg", TINY.replace("occlusions_s=2-2.5", "occlusions_s=1-2;1.5-3"))
            with self.assertRaises(CommandError) as ctx:
                call_command("simulate", config=config, out=os.path.join(tmp, "out"), stdout=StringIO())
            self.assertFalse(os.path.exists(os.path.join(tmp, "out")))
        self.assertEqual(ctx.exception.returncode, COMMON.INPUT_ERR)
        self.assertIn("1-2", str(ctx.exception))
        self.assertIn("1.5-3", str(ctx.exception))

    def test_unknown_key(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "bad.cfg", TINY + "colour=blue\n")
            with self.assertRaises(CommandError) as ctx:
                call_command("simulate", config=config, out=os.path.join(tmp, "out"), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, COMMON.INPUT_ERR)
        self.assertIn("line 6: unknown key colour", str(ctx.exception))
        self.assertTrue(str(ctx.exception).startswith(errInfo(COMMON.INPUT_ERR)))

    def test_unreadable_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = os.path.join(tmp, "bad.cfg")
            with open(config, "wb") as f:
                f.write(b"duration_s=4\nseed=\xff\n")
            with self.assertRaises(CommandError) as ctx:
                call_command("simulate", config=config, out=os.path.join(tmp, "out"), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, COMMON.INPUT_ERR)
        self.assertIn("cannot read scenario file", str(ctx.exception))

    def test_bundled_configs(self):
        for name in sorted(os.listdir(SCENARIOS)):
            loaded = []

            def shortened(scenario):
                loaded.append(scenario)
                return run_scenario(replace(
                    scenario, duration=3.0, filter_start=1.0, capture_time=3.0, param_check_time=3.0, occlusions=(),
                ))

            with self.subTest(name), tempfile.TemporaryDirectory() as tmp:
                with mock.patch("apps.experiments.management.commands.simulate.run_scenario", side_effect=shortened):
                    call_command("simulate", config=os.path.join(SCENARIOS, name), out=tmp, stdout=StringIO())
                self.assertTrue(os.path.isfile(os.path.join(tmp, "metrics.json")))
                self.assertIsInstance(loaded[0].inertia, np.ndarray)
                self.assertEqual(loaded[0].q0.shape, (4,))

    def test_divergence_exit_code(self):
        result = run_scenario(short_scenario(duration_s=3, filter_start_s=1, capture_time_s=3,
                                             param_check_time_s=3, occlusions_s=""))
        result.fault = True
        with tempfile.TemporaryDirectory() as tmp:
            out_dir = os.path.join(tmp, "out")
            with mock.patch("apps.experiments.management.commands.simulate.run_scenario", return_value=result):
                with self.assertRaises(CommandError) as ctx:
                    call_command("simulate", out=out_dir, stdout=StringIO())
            self.assertTrue(os.path.isfile(os.path.join(out_dir, "estimate.csv")))
        self.assertEqual(ctx.exception.returncode, COMMON.DIVERGED)

    def test_batch(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "tiny.cfg", TINY)
            out_dir = os.path.join(tmp, "out")
            call_command("simulate", config=config, out=out_dir, batch=2, stdout=StringIO())
            with open(os.path.join(out_dir, "batch.json")) as f:
                summary = json.load(f)
        self.assertEqual(summary["runs"], 2)
        self.assertEqual(len(summary["members"]), 2)


class ReplayCommandTests(SimpleTestCase):
    def test_non_monotone_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            log = write(tmp, "log.csv", LOG_HEADER + "0,1,0,0,0,0,0,1,1\n1,1,0,0,0,0,0,1,1\n0.5,1,0,0,0,0,0,1,1\n")
            with self.assertRaises(CommandError) as ctx:
                call_command("replay", log=log, out=os.path.join(tmp, "out"), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, COMMON.INPUT_ERR)
        self.assertIn("row 3", str(ctx.exception))

    def test_missing_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                call_command("replay", log=os.path.join(tmp, "nope.csv"), out=tmp, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, COMMON.INPUT_ERR)

    def test_empty_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            log = write(tmp, "log.csv", LOG_HEADER)
            out_dir = os.path.join(tmp, "out")
            call_command("replay", log=log, out=out_dir, stdout=StringIO())
            self.assertEqual(sorted(os.listdir(out_dir)), ["estimate.csv", "metrics.json"])
            self.assertEqual(line_count(os.path.join(out_dir, "estimate.csv")), 1)
            with open(os.path.join(out_dir, "metrics.json")) as f:
                self.assertEqual(json.load(f)["updates"], 0)

    def test_replay_of_simulated_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "tiny.cfg", TINY)
            sim_dir = os.path.join(tmp, "sim")
            call_command("simulate", config=config, out=sim_dir, stdout=StringIO())
            rep_dir = os.path.join(tmp, "rep")
            call_command(
                "replay", log=os.path.join(sim_dir, "measurements.csv"), config=config, out=rep_dir,
                truth=os.path.join(sim_dir, "truth.csv"), stdout=StringIO(),
            )
            sim = np.loadtxt(os.path.join(sim_dir, "estimate.csv"), delimiter=",", skiprows=1)
            rep = np.loadtxt(os.path.join(rep_dir, "estimate.csv"), delimiter=",", skiprows=1)
            with open(os.path.join(rep_dir, "metrics.json")) as f:
                metrics = json.load(f)
        np.testing.assert_allclose(rep, sim, rtol=0.0, atol=1e-12)
        self.assertIn("capture_within_tolerance", metrics)

    def test_replay_without_truth_seeds_from_measurements(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write(tmp, "tiny.cfg", TINY)
            sim_dir = os.path.join(tmp, "sim")
            call_command("simulate", config=config, out=sim_dir, stdout=StringIO())
            rep_dir = os.path.join(tmp, "rep")
            with self.assertLogs("apps.experiments.simulation", level="WARNING") as logs:
                call_command(
                    "replay", log=os.path.join(sim_dir, "measurements.csv"), config=config, out=rep_dir,
                    stdout=StringIO(),
                )
            with open(os.path.join(rep_dir, "metrics.json")) as f:
                metrics = json.load(f)
        self.assertTrue(any("seeding from the measurements" in line for line in logs.output))
        # start sample at 1 s seeds the filter, 2-2.5 s is occluded
        self.assertEqual(metrics["updates"] + metrics["gated"], 4)
