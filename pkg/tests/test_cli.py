# Copyright 2024 The envbo Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Command line tests."""

import io
import json
import os
import shutil
import tempfile
import unittest

import mock
import pandas as pd

from envbo import acquisition
from envbo import cli
from envbo import envloop
from envbo import testbed
from envbo import windfarm


def run(argv):
    """(exit code, stdout) of one command line call."""
    with mock.patch("sys.stdout", new_callable=io.StringIO) as out:
        with mock.patch("sys.stderr", new_callable=io.StringIO):
            code = cli.main(argv)
    return code, out.getvalue()


class AskTellTest(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.session = os.path.join(self.directory, "session.json")

    def tearDown(self):
        shutil.rmtree(self.directory)

    def asktell(self, *args):
        return run(["asktell"] + list(args) + ["--session", self.session])

    def init(self, *extra):
        return self.asktell("init", "--lower", "0", "0", "--upper", "1", "1",
                            "--env-indices", "1", "--budget", "6", *extra)

    def test_full_cycle(self):
        self.assertEqual(self.init()[0], 0)
        for env, y in ((0.2, 1.0), (0.5, 2.5), (0.8, 0.7)):
            code, out = self.asktell("suggest", "--env", str(env))
            self.assertEqual(code, 0)
            x = json.loads(out)["x"]
            self.assertEqual(x[1], env)
            code, out = self.asktell("observe", "--x", *[repr(v) for v in x],
                                     "--y", str(y))
            self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["remaining"], 3)

        code, out = self.asktell("predict", "--env", "0.5")
        self.assertEqual(code, 0)
        body = json.loads(out)
        self.assertEqual(len(body["x_ctrl"]), 1)
        self.assertTrue(0 <= body["x_ctrl"][0] <= 1)

        code, out = self.asktell("status")
        body = json.loads(out)
        self.assertEqual(body["evaluations_used"], 3)
        self.assertEqual(body["best_y"], 2.5)

    def test_first_suggestion_is_reproducible(self):
        self.init("--seed", "3")
        first = self.asktell("suggest", "--env", "0.4")[1]
        second = self.asktell("suggest", "--env", "0.4")[1]
        self.assertEqual(first, second)

    def test_session_replays_run_envbo(self):
        problem = testbed.levy_problem()
        envs = [[1.0], [2.5], [4.0]]
        run_state = envloop.run_envbo(
            problem, problem.domain, envs,
            acquisition.AcquisitionSpec(acquisition.EI), 3, seed=5,
        )
        self.assertEqual(self.asktell("init", "--problem", "levy", "--budget", "3",
                                      "--seed", "5")[0], 0)
        for env, record in zip(envs, run_state.trace):
            code, out = self.asktell("suggest", "--env", repr(env[0]))
            self.assertEqual(code, 0)
            x = json.loads(out)["x"]
            self.assertEqual(x, record.x)
            code, _ = self.asktell("observe", "--x", *[repr(v) for v in x],
                                   "--y", repr(problem(x)))
            self.assertEqual(code, 0)
        body = json.loads(self.asktell("status")[1])
        self.assertEqual(body["remaining"], 0)
        self.assertEqual(body["best_y"], run_state.best()[1])

    def test_init_refuses_to_overwrite(self):
        self.init()
        self.assertEqual(self.init()[0], 1)
        self.assertEqual(self.init("--force")[0], 0)

    def test_problem_session(self):
        code, _ = self.asktell("init", "--problem", "hartmann", "--budget", "5",
                               "--acquisition", "logei")
        self.assertEqual(code, 0)
        code, out = self.asktell("suggest", "--env", "0.3")
        self.assertEqual(len(json.loads(out)["x"]), 6)

    def test_non_numeric_y_leaves_session_unchanged(self):
        self.init()
        with open(self.session) as f:
            before = f.read()
        code, _ = self.asktell("observe", "--x", "0.1", "0.2", "--y", "abc")
        self.assertEqual(code, 1)
        with open(self.session) as f:
            self.assertEqual(f.read(), before)

    def test_failed_evaluation(self):
        self.init()
        code, out = self.asktell("observe", "--x", "0.1", "0.2", "--failed")
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["evaluations_used"], 1)
        body = json.loads(self.asktell("status")[1])
        self.assertEqual(body["observations"], 0)

    def test_predict_without_data(self):
        self.init()
        self.assertEqual(self.asktell("predict", "--env", "0.5")[0], 1)

    def test_missing_session(self):
        self.assertEqual(self.asktell("status")[0], 1)

    def test_corrupt_session(self):
        with open(self.session, "w") as f:
            f.write("{")
        self.assertEqual(self.asktell("status")[0], 1)

    def test_env_out_of_bounds(self):
        self.init()
        self.assertEqual(self.asktell("suggest", "--env", "2.0")[0], 1)


class ArgumentTest(unittest.TestCase):
    def test_unknown_command(self):
        self.assertEqual(run(["tune"])[0], 1)

    def test_config_and_preset_are_exclusive(self):
        code, _ = run(["benchmark", "--config", "a.json", "--preset", "levy-full"])
        self.assertEqual(code, 1)

    def test_invalid_config_file(self):
        directory = tempfile.mkdtemp()
        try:
            path = os.path.join(directory, "bad.json")
            with open(path, "w") as f:
                json.dump({"budget": 10, "colour": "red"}, f)
            self.assertEqual(run(["benchmark", "--config", path])[0], 1)
        finally:
            shutil.rmtree(directory)

    def test_runtime_failure(self):
        with mock.patch("envbo.benchmark.run_benchmark",
                        side_effect=RuntimeError("worker died")):
            code, _ = run(["benchmark", "--preset", "levy-full", "--output",
                           tempfile.gettempdir()])
        self.assertEqual(code, 2)


class BenchmarkCommandTest(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_smoke_run_writes_tables(self):
        path = os.path.join(self.directory, "smoke.json")
        with open(path, "w") as f:
            json.dump(
                {"label": "smoke", "methods": ["envbo-ei", "random"],
                 "test_points": 3, "mle_restarts": 1, "n_samples": 10,
                 "n_starts": 2},
                f,
            )
        code, out = run(["benchmark", "--config", path, "--budget", "5",
                         "--replications", "1", "--output", self.directory])
        self.assertEqual(code, 0)
        self.assertIn("smoke envbo-ei", out)
        final = pd.read_csv(os.path.join(self.directory, "benchmark_final.csv"))
        self.assertEqual(len(final), 2)
        checkpoints = pd.read_csv(
            os.path.join(self.directory, "benchmark_checkpoints.csv")
        )
        self.assertEqual(checkpoints["evaluations"].tolist(), [5, 5])
        for name in ("benchmark_summary.csv", "benchmark_comparison.csv"):
            self.assertTrue(os.path.exists(os.path.join(self.directory, name)))

    def test_step_sweep_writes_sweeps_and_stamps_every_table(self):
        path = os.path.join(self.directory, "sweep.json")
        with open(path, "w") as f:
            json.dump(
                [
                    {"label": "step=%g" % a, "methods": ["random"], "step": [a],
                     "budget": 5, "replications": 1, "test_points": 2,
                     "mle_restarts": 1, "n_samples": 10, "n_starts": 2}
                    for a in (0.5, 1.0, 1.5)
                ],
                f,
            )
        code, _ = run(["benchmark", "--config", path, "--output", self.directory])
        self.assertEqual(code, 0)
        names = [n for n in os.listdir(self.directory) if n.endswith(".csv")]
        self.assertIn("benchmark_sweeps.csv", names)
        for name in names:
            frame = pd.read_csv(os.path.join(self.directory, name))
            self.assertIn("seed", frame.columns, name)
            self.assertIn("config_hash", frame.columns, name)
        sweeps = pd.read_csv(os.path.join(self.directory, "benchmark_sweeps.csv"))
        self.assertEqual(sweeps["column"].tolist(), ["step"])
        self.assertEqual(sweeps["settings"].tolist(), [3])
        self.assertEqual(len(sweeps["config_hash"][0].split()), 3)

    def test_same_config_gives_identical_files(self):
        path = os.path.join(self.directory, "smoke.json")
        with open(path, "w") as f:
            json.dump({"methods": ["random"], "budget": 5, "replications": 2,
                       "test_points": 2, "mle_restarts": 1, "seed": 9}, f)
        contents = []
        for name in ("first", "second"):
            output = os.path.join(self.directory, name)
            self.assertEqual(run(["benchmark", "--config", path, "--output",
                                  output])[0], 0)
            with open(os.path.join(output, "benchmark_checkpoints.csv"), "rb") as f:
                contents.append(f.read())
        self.assertEqual(contents[0], contents[1])


class WindfarmCommandTest(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_layouts_revalidate(self):
        path = os.path.join(self.directory, "farm.json")
        with open(path, "w") as f:
            json.dump(
                {"label": "tiny", "methods": ["envbo", "random"], "budget": 6,
                 "bo_directions": [90, 135], "grid_size": 3, "random_layouts": 2,
                 "mle_restarts": 1, "n_samples": 10, "n_starts": 2},
                f,
            )
        code, _ = run(["windfarm", "--config", path, "--output", self.directory])
        self.assertEqual(code, 0)
        grid = pd.read_csv(os.path.join(self.directory, "windfarm_tiny_grid.csv"))
        with open(os.path.join(self.directory, "windfarm_tiny_layouts.json")) as f:
            body = json.load(f)
        self.assertEqual(len(body["layouts"]), 3)
        for layout, feasible in zip(body["layouts"], grid["feasible"]):
            self.assertEqual(windfarm.is_feasible(windfarm.FarmLayout(**layout)),
                             bool(feasible))
        summary = pd.read_csv(
            os.path.join(self.directory, "windfarm_tiny_summary.csv")
        )
        self.assertEqual(set(summary["config_hash"]), {body["config_hash"]})


if __name__ == "__main__":
    unittest.main()
