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

"""Synthetic problems, scoring and statistics tests."""

import itertools
import math
import unittest

import mock
import numpy as np
from parameterized import parameterized
from scipy import stats

from envbo import acquisition
from envbo import envloop
from envbo import envsim
from envbo import errors
from envbo import testbed
from tests import SLOW

HARTMANN_ARGMAX = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]


def levy_by_hand(x1, x2):
    w1 = 1 + (x1 - 1) / 4.0
    w2 = 1 + (x2 - 1) / 4.0
    return -(
        math.sin(math.pi * w1) ** 2
        + (w1 - 1) ** 2 * (1 + 10 * math.sin(math.pi * w1 + 1) ** 2)
        + (w2 - 1) ** 2 * (1 + math.sin(2 * math.pi * w2) ** 2)
    )


class ProblemTest(unittest.TestCase):
    def test_levy_maximum(self):
        self.assertAlmostEqual(testbed.levy2_negated([1.0, 1.0]), 0.0, places=14)

    @parameterized.expand([(0.0, 0.0), (-7.5, 10.0), (3.2, -4.4)])
    def test_levy_matches_scalar_formula(self, x1, x2):
        self.assertAlmostEqual(
            testbed.levy2_negated([x1, x2]), levy_by_hand(x1, x2), places=12
        )

    def test_levy_rows(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        values = testbed.levy2_negated(X)
        self.assertEqual(values.shape, (2,))
        self.assertAlmostEqual(values[0], -0.71584, places=4)

    def test_hartmann_maximum(self):
        self.assertAlmostEqual(
            float(testbed.hartmann6_negated(HARTMANN_ARGMAX)), 3.32237, places=4
        )

    def test_hartmann_is_positive_on_cube(self):
        rng = np.random.default_rng(0)
        values = testbed.hartmann6_negated(rng.random((500, 6)))
        self.assertTrue(np.all(values > 0))
        self.assertTrue(np.all(values < 3.32237 + 1e-9))

    def test_levy_domain(self):
        problem = testbed.levy_problem()
        self.assertEqual(problem.domain.env_indices, (1,))
        np.testing.assert_array_equal(problem.domain.lower, [-7.5, -10.0])
        np.testing.assert_array_equal(problem.step_limits, [1.5])

    @parameterized.expand([(1, (5,), [0.05]), (2, (0, 5), [0.05, 0.1]),
                           (3, (0, 3, 5), [0.05, 0.1, 0.1])])
    def test_hartmann_env_defaults(self, n_env, indices, steps):
        problem = testbed.hartmann_problem(n_env=n_env)
        self.assertEqual(problem.domain.env_indices, indices)
        np.testing.assert_allclose(problem.step_limits, steps)

    def test_unknown_problem(self):
        with self.assertRaises(errors.InvalidArgumentError):
            testbed.get_problem("branin")
        with self.assertRaises(errors.InvalidArgumentError):
            testbed.get_problem(testbed.LEVY, env_indices=(0,))
        with self.assertRaises(errors.InvalidArgumentError):
            testbed.hartmann_problem(n_env=4)


class NoiseTest(unittest.TestCase):
    def test_clean_problem_is_deterministic(self):
        problem = testbed.levy_problem()
        self.assertEqual(problem([0.5, 0.5]), problem([0.5, 0.5]))

    def test_noise_is_seeded_and_centred(self):
        a = testbed.add_noise(testbed.levy_problem(), 0.5, seed=3)
        b = testbed.add_noise(testbed.levy_problem(), 0.5, seed=3)
        draws = np.array([a([1.0, 1.0]) for _ in range(4000)])
        self.assertEqual(draws[0], b([1.0, 1.0]))
        self.assertAlmostEqual(float(np.mean(draws)), 0.0, delta=0.05)
        self.assertAlmostEqual(float(np.std(draws)), 0.5, delta=0.05)

    @parameterized.expand([(0.1,), (1.0,), (3.0,)])
    def test_noise_sd_and_one_sigma_coverage(self, sigma):
        problem = testbed.hartmann_problem(n_env=1)
        noisy = testbed.add_noise(problem, sigma, seed=11)
        x = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
        residuals = np.array([noisy(x) for _ in range(20000)]) - problem(x)
        self.assertAlmostEqual(float(np.std(residuals)), sigma, delta=0.03 * sigma)
        inside = float(np.mean(np.abs(residuals) <= sigma))
        self.assertAlmostEqual(inside, 0.6827, delta=0.015)

    def test_values_stay_noise_free(self):
        noisy = testbed.add_noise(testbed.levy_problem(), 1.0, seed=0)
        self.assertEqual(noisy.values([[1.0, 1.0]])[0], 0.0)

    def test_negative_sigma(self):
        with self.assertRaises(errors.InvalidArgumentError):
            testbed.add_noise(testbed.levy_problem(), -0.1)


class MapeTest(unittest.TestCase):
    def test_example(self):
        self.assertAlmostEqual(testbed.mape([1.5, 1.0], [1.0, 4.0]), 0.625)

    def test_exact_prediction(self):
        self.assertEqual(testbed.mape([2.0, -3.0], [2.0, -3.0]), 0.0)

    def test_negative_truth_uses_magnitude(self):
        self.assertAlmostEqual(testbed.mape([-1.0], [-2.0]), 0.5)

    def test_zero_truth(self):
        with self.assertRaises(errors.ZeroTruthError):
            testbed.mape([1.0, 1.0], [1.0, 0.0])

    def test_length_mismatch(self):
        with self.assertRaises(errors.DimensionMismatchError):
            testbed.mape([1.0], [1.0, 2.0])


class TruthOracleTest(unittest.TestCase):
    @parameterized.expand([(0.0,), (-9.0,), (4.3,)])
    def test_levy_matches_dense_grid(self, env):
        problem = testbed.levy_problem()
        grid = np.linspace(-7.5, 7.5, 150001)
        rows = np.column_stack([grid, np.full_like(grid, env)])
        expected = float(np.max(problem.values(rows)))
        actual = testbed.truth_conditional_max(problem, [env], seed=0)
        self.assertAlmostEqual(actual, expected, delta=1e-4)

    def test_hartmann_at_known_optimum(self):
        problem = testbed.hartmann_problem(n_env=1)
        value = testbed.truth_conditional_max(problem, [HARTMANN_ARGMAX[5]], seed=0,
                                              n_samples=50, n_starts=10)
        self.assertAlmostEqual(value, 3.32237, places=3)


class MannWhitneyTest(unittest.TestCase):
    def test_u_counts_pairs(self):
        result = testbed.mann_whitney_u([3.0, 4.0], [1.0, 2.0, 5.0])
        # 3>1, 3>2, 4>1, 4>2
        self.assertEqual(result.u, 4.0)

    def test_ties_count_half(self):
        self.assertEqual(testbed.mann_whitney_u([1.0], [1.0]).u, 0.5)

    def test_exact_p_against_enumeration(self):
        a = [0.3, 1.2, 2.5, 0.9]
        b = [1.7, 2.8, 3.1, 4.0, 2.2]
        result = testbed.mann_whitney_u(a, b)
        pooled = a + b
        centre = len(a) * len(b) / 2.0
        extreme = 0
        total = 0
        for subset in itertools.combinations(range(len(pooled)), len(a)):
            xs = [pooled[i] for i in subset]
            ys = [pooled[i] for i in range(len(pooled)) if i not in subset]
            total += 1
            u = sum(x > y for x in xs for y in ys)
            if abs(u - centre) >= abs(result.u - centre):
                extreme += 1
        self.assertAlmostEqual(result.p, extreme / float(total), places=12)

    def test_exact_matches_scipy(self):
        a = [0.1, 0.5, 0.7, 1.3, 2.0]
        b = [0.4, 0.9, 1.1, 1.6, 2.4, 3.0]
        expected = stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        result = testbed.mann_whitney_u(a, b)
        self.assertEqual(result.u, expected.statistic)
        self.assertAlmostEqual(result.p, expected.pvalue, places=10)

    def test_normal_approximation_matches_scipy(self):
        rng = np.random.default_rng(1)
        a = np.round(rng.normal(0.0, 1.0, 30), 1)
        b = np.round(rng.normal(0.4, 1.0, 30), 1)
        expected = stats.mannwhitneyu(a, b, alternative="two-sided",
                                      use_continuity=False, method="asymptotic")
        result = testbed.mann_whitney_u(a, b)
        self.assertEqual(result.u, expected.statistic)
        self.assertAlmostEqual(result.p, expected.pvalue, places=10)

    def test_identical_samples(self):
        self.assertEqual(testbed.mann_whitney_u([1.0] * 10, [1.0] * 10).p, 1.0)

    def test_empty_sample(self):
        with self.assertRaises(errors.InvalidArgumentError):
            testbed.mann_whitney_u([], [1.0])


def _random_campaign(problem, budget, seed=0, measurements=None):
    source = measurements
    if source is None:
        domain = problem.domain
        source = envsim.init_walk(
            domain.env_lower, domain.env_upper, problem.step_limits, seed=seed
        )
    return envloop.run_random(
        problem,
        problem.domain,
        source,
        acquisition.AcquisitionSpec(acquisition.EI),
        budget,
        seed=seed,
        mle_restarts=2,
    )


class EvaluateCampaignTest(unittest.TestCase):
    def setUp(self):
        self.problem = testbed.hartmann_problem(n_env=1)
        self.state = _random_campaign(self.problem, 12, seed=2)

    def test_checkpoints(self):
        report = testbed.evaluate_campaign(self.state, self.problem, m=4, seed=0,
                                           n_samples=20, n_starts=3)
        self.assertEqual([n for n, _ in report.checkpoints], [10, 12])
        self.assertEqual(report.final_mape, report.checkpoints[-1][1])
        self.assertTrue(all(score >= 0 for _, score in report.checkpoints))
        self.assertEqual(report.test_points.shape, (4, 1))
        self.assertFalse(report.degenerate)

    def test_test_points_inside_effective_domain(self):
        report = testbed.evaluate_campaign(self.state, self.problem, m=4, seed=0,
                                           n_samples=20, n_starts=3)
        lower, upper = testbed.effective_domain(self.state)
        self.assertTrue(np.all(report.test_points >= lower))
        self.assertTrue(np.all(report.test_points <= upper))
        self.assertAlmostEqual(report.domain_size, float(upper[0] - lower[0]))

    @mock.patch("envbo.testbed.logger")
    def test_degenerate_domain(self, mock_logger):
        state = _random_campaign(self.problem, 3, measurements=[[0.5]] * 3)
        report = testbed.evaluate_campaign(state, self.problem, m=2, seed=0,
                                           n_samples=10, n_starts=2)
        self.assertTrue(report.degenerate)
        self.assertTrue(mock_logger.warning.called)
        self.assertEqual(report.domain_size, 0.0)

    def test_no_observations(self):
        state = envloop.CampaignState(
            self.problem.domain, acquisition.AcquisitionSpec(acquisition.EI), 5
        )
        with self.assertRaises(errors.EmptyDatasetError):
            testbed.evaluate_campaign(state, self.problem)

    def test_default_test_points(self):
        self.assertEqual(
            [testbed.default_test_points(n) for n in (1, 2, 3)], [25, 50, 75]
        )


class VariabilityFitTest(unittest.TestCase):
    def test_lengthscale_per_input(self):
        fit = testbed.ard_variability_fit(
            testbed.hartmann_problem(n_env=1), n_points=60, seed=0
        )
        self.assertEqual(fit.lengthscales.shape, (6,))
        self.assertTrue(np.all(fit.lengthscales > 0))

    def test_too_few_points(self):
        with self.assertRaises(errors.InvalidArgumentError):
            testbed.ard_variability_fit(testbed.levy_problem(), n_points=2)


@unittest.skipUnless(SLOW, "set ENVBO_SLOW_TESTS to run")
class AcceptanceTest(unittest.TestCase):
    def test_envbo_learns_hartmann(self):
        problem = testbed.hartmann_problem(n_env=1)
        walk = envsim.init_walk(
            problem.domain.env_lower, problem.domain.env_upper, problem.step_limits,
            seed=0,
        )
        state = envloop.run_envbo(
            problem,
            problem.domain,
            walk,
            acquisition.AcquisitionSpec(acquisition.EI),
            100,
            seed=0,
        )
        report = testbed.evaluate_campaign(state, problem, seed=0)
        self.assertLess(report.final_mape, 0.25)
        self.assertLess(report.final_mape, report.checkpoints[0][1])

    def test_hartmann_variability_ordering(self):
        fit = testbed.ard_variability_fit(
            testbed.hartmann_problem(n_env=1), n_points=2000, seed=0
        )
        lengthscales = fit.lengthscales
        self.assertFalse(fit.fallback)
        # x3 varies least, x1 most
        self.assertEqual(int(np.argmax(lengthscales)), 2)
        self.assertEqual(int(np.argmin(lengthscales)), 0)


if __name__ == "__main__":
    unittest.main()
