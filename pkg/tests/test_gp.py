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

"""Gaussian process tests.

Likelihood gradients are checked against central differences and
posteriors against dense linear algebra written out in the test.
"""

import math
import unittest

import mock
import numpy as np
from parameterized import parameterized

from envbo import errors
from envbo import gp


def _random_instance(rng, family):
    n = int(rng.integers(4, 12))
    d = int(rng.integers(1, 4))
    X = rng.random((n, d))
    y = np.sin(3 * X).sum(axis=1) + 0.1 * rng.standard_normal(n)
    kernel = gp.KernelSpec(
        family,
        np.exp(rng.uniform(-1.0, 0.5, size=d)),
        math.exp(rng.uniform(-0.5, 0.5)),
    )
    noise = math.exp(rng.uniform(-4, -1))
    hp = gp.Hyperparameters(rng.uniform(-0.5, 0.5), kernel, noise)
    return hp, gp.Dataset(X, y)


def _dense_kernel(family, ls, sf2, A, B):
    r2 = np.sum(((A[:, None, :] - B[None, :, :]) / ls) ** 2, axis=-1)
    if family == gp.RBF:
        return sf2 * np.exp(-0.5 * r2)
    r = np.sqrt(r2)
    return sf2 * (1 + math.sqrt(5) * r + 5.0 / 3.0 * r2) * np.exp(-math.sqrt(5) * r)


class KernelTest(unittest.TestCase):
    def test_matern_at_zero_distance(self):
        spec = gp.KernelSpec(gp.MATERN52, [0.3, 0.7], 2.5)
        self.assertAlmostEqual(gp.kernel_eval(spec, [0.1, 0.2], [0.1, 0.2]), 2.5)

    def test_matern_closed_form(self):
        spec = gp.KernelSpec(gp.MATERN52, [0.5], 1.0)
        r = 0.4 / 0.5
        expected = (1 + math.sqrt(5) * r + 5 * r * r / 3) * math.exp(-math.sqrt(5) * r)
        self.assertAlmostEqual(gp.kernel_eval(spec, [0.0], [0.4]), expected, places=14)

    def test_rbf_closed_form(self):
        spec = gp.KernelSpec(gp.RBF, [1.0, 2.0], 3.0)
        expected = 3.0 * math.exp(-0.5 * (1.0 + 0.25))
        value = gp.kernel_eval(spec, [0, 0], [1, 1])
        self.assertAlmostEqual(value, expected, places=14)

    def test_shared_lengthscale_broadcasts(self):
        spec = gp.KernelSpec(gp.RBF, [0.5], 1.0)
        self.assertFalse(spec.is_ard)
        np.testing.assert_array_equal(spec.lengthscales_for(3), [0.5, 0.5, 0.5])

    def test_ard_dimension_mismatch(self):
        spec = gp.KernelSpec(gp.RBF, [0.5, 0.5], 1.0)
        with self.assertRaises(errors.DimensionMismatchError):
            gp.kernel_eval(spec, [0, 0, 0], [1, 1, 1])

    @parameterized.expand(
        [
            ("family", dict(family="cubic")),
            ("lengthscale", dict(lengthscales=[0.0])),
            ("output_scale", dict(output_scale=-1.0)),
        ]
    )
    def test_invalid_spec(self, _, overrides):
        kwargs = dict(family=gp.MATERN52, lengthscales=[1.0], output_scale=1.0)
        kwargs.update(overrides)
        with self.assertRaises(errors.InvalidArgumentError):
            gp.KernelSpec(**kwargs)


class LogMarginalLikelihoodTest(unittest.TestCase):
    @parameterized.expand([(gp.MATERN52,), (gp.RBF,)])
    def test_gradient_matches_finite_differences(self, family):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            hp, data = _random_instance(rng, family)
            _, grad = gp.log_marginal_likelihood(hp, data, eval_gradient=True)
            theta = hp.to_vector()
            numeric = np.zeros_like(theta)
            h = 1e-5
            for i in range(theta.size):
                up = theta.copy()
                up[i] += h
                dn = theta.copy()
                dn[i] -= h
                numeric[i] = (
                    gp.log_marginal_likelihood(
                        gp.Hyperparameters.from_vector(up, family), data
                    )
                    - gp.log_marginal_likelihood(
                        gp.Hyperparameters.from_vector(dn, family), data
                    )
                ) / (2 * h)
            np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-6)

    def test_matches_dense_formula(self):
        rng = np.random.default_rng(5)
        hp, data = _random_instance(rng, gp.MATERN52)
        ls = hp.kernel.lengthscales_for(data.dim)
        sf2 = hp.kernel.output_scale
        K = _dense_kernel(gp.MATERN52, ls, sf2, data.inputs, data.inputs)
        K += hp.noise_variance * np.eye(len(data))
        resid = data.outputs - hp.mean_constant
        _, logdet = np.linalg.slogdet(K)
        expected = (
            -0.5 * resid @ np.linalg.solve(K, resid)
            - 0.5 * logdet
            - 0.5 * len(data) * math.log(2 * math.pi)
        )
        self.assertAlmostEqual(gp.log_marginal_likelihood(hp, data), expected, places=6)

    @parameterized.expand(
        [
            (gp.MATERN52, 1.7, 0.3, 2.0, 0.1),
            (gp.RBF, -0.4, 0.0, 0.5, 1e-3),
            (gp.MATERN52, 5.0, 5.0, 1.0, 0.2),
        ]
    )
    def test_single_point_closed_form(self, family, y, c, sf2, noise):
        hp = gp.Hyperparameters(c, gp.KernelSpec(family, [0.4], sf2), noise)
        data = gp.Dataset([[0.3]], [y])
        total = sf2 + noise
        expected = (
            -0.5 * (y - c) ** 2 / total
            - 0.5 * math.log(total)
            - 0.5 * math.log(2 * math.pi)
        )
        self.assertAlmostEqual(gp.log_marginal_likelihood(hp, data), expected, places=6)

    def test_duplicate_inputs_need_jitter(self):
        X = np.array([[0.2], [0.2], [0.2]])
        data = gp.Dataset(X, [1.0, 1.0, 1.0])
        hp = gp.Hyperparameters(0.0, gp.KernelSpec(gp.RBF, [0.3], 1.0), 0.0)
        model = gp.build_model(hp, data)
        self.assertGreater(model.jitter, 0)

    def test_singular_after_max_jitter(self):
        K = np.array([[1.0, 2.0], [2.0, 1.0]])
        with self.assertRaises(errors.SingularCovarianceError) as cm:
            gp._factorize(K)
        self.assertAlmostEqual(cm.exception.jitter, gp.JITTER_MAX * 1.0)


class PosteriorTest(unittest.TestCase):
    @parameterized.expand([(gp.MATERN52,), (gp.RBF,)])
    def test_matches_dense_oracle(self, family):
        rng = np.random.default_rng(11)
        hp, data = _random_instance(rng, family)
        model = gp.build_model(hp, data)
        X_star = rng.random((7, data.dim))
        mean, variance = gp.posterior(model, X_star)

        ls = hp.kernel.lengthscales_for(data.dim)
        sf2 = hp.kernel.output_scale
        K = _dense_kernel(family, ls, sf2, data.inputs, data.inputs)
        K += (hp.noise_variance + model.jitter) * np.eye(len(data))
        K_s = _dense_kernel(family, ls, sf2, data.inputs, X_star)
        expected_mean = hp.mean_constant + K_s.T @ np.linalg.solve(
            K, data.outputs - hp.mean_constant
        )
        expected_var = sf2 - np.sum(K_s * np.linalg.solve(K, K_s), axis=0)
        np.testing.assert_allclose(mean, expected_mean, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(variance, expected_var, rtol=1e-8, atol=1e-10)

    def test_variance_never_negative(self):
        X = np.linspace(0, 1, 6).reshape(-1, 1)
        data = gp.Dataset(X, np.cos(4 * X[:, 0]))
        hp = gp.Hyperparameters(0.0, gp.KernelSpec(gp.RBF, [0.2], 1.0), 1e-10)
        model = gp.build_model(hp, data)
        _, variance = model.predict(X)
        self.assertTrue(np.all(variance >= 0))

    @parameterized.expand([(gp.MATERN52, 0), (gp.RBF, 1), (gp.MATERN52, 2)])
    def test_observation_never_raises_variance(self, family, seed):
        rng = np.random.default_rng(seed)
        X = rng.random((6, 2))
        data = gp.Dataset(X, np.sin(5 * X).sum(axis=1))
        kernel = gp.KernelSpec(family, [0.3, 0.6], 1.5)
        hp = gp.Hyperparameters(0.0, kernel, 1e-3)
        X_star = rng.random((50, 2))
        _, before = gp.build_model(hp, data).predict(X_star)
        for x in rng.random((4, 2)):
            data = data.append(x, float(np.sin(5 * x).sum()))
            _, after = gp.build_model(hp, data).predict(X_star)
            self.assertTrue(np.all(after <= before + 1e-9))
            before = after

    def test_dimension_mismatch(self):
        data = gp.Dataset(np.array([[0.0, 0.0], [1.0, 1.0]]), [0.0, 1.0])
        hp = gp.Hyperparameters(0.0, gp.KernelSpec(gp.RBF, [1.0], 1.0), 1e-4)
        model = gp.build_model(hp, data)
        with self.assertRaises(errors.DimensionMismatchError):
            gp.posterior(model, np.zeros((1, 3)))


class DatasetTest(unittest.TestCase):
    def test_append_returns_new_dataset(self):
        data = gp.Dataset([[0.0, 1.0]], [2.0])
        bigger = data.append([1.0, 0.0], 3.0)
        self.assertEqual(len(data), 1)
        self.assertEqual(len(bigger), 2)
        np.testing.assert_array_equal(bigger.head(1).inputs, data.inputs)

    def test_length_mismatch(self):
        with self.assertRaises(errors.DimensionMismatchError):
            gp.Dataset(np.zeros((3, 2)), [1.0, 2.0])


class FitMleTest(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        X = rng.random((25, 2)) * [4.0, 10.0]
        self.data = gp.Dataset(X, np.sin(X[:, 0]) + 0.01 * X[:, 1])

    def test_fit_interpolates_training_data(self):
        model = gp.fit_mle(self.data, gp.MATERN52, seed=1, n_restarts=3,
                           lower=[0, 0], upper=[4, 10])
        self.assertFalse(model.fallback)
        mean, _ = model.predict(self.data.inputs)
        np.testing.assert_allclose(mean, self.data.outputs, atol=0.1)

    def test_inert_input_gets_long_lengthscale(self):
        model = gp.fit_mle(self.data, gp.MATERN52, seed=1, n_restarts=3,
                           lower=[0, 0], upper=[4, 10])
        ls = model.hyperparameters.kernel.lengthscales_for(2)
        self.assertGreater(ls[1], ls[0])

    def test_deterministic_for_seed(self):
        a = gp.fit_mle(self.data, gp.RBF, seed=7, n_restarts=2)
        b = gp.fit_mle(self.data, gp.RBF, seed=7, n_restarts=2)
        np.testing.assert_array_equal(
            a.hyperparameters.to_vector(), b.hyperparameters.to_vector()
        )

    def test_raw_hyperparameters_scale_back(self):
        model = gp.fit_mle(self.data, gp.MATERN52, seed=0, n_restarts=2,
                           lower=[0, 0], upper=[4, 10])
        raw = model.raw_hyperparameters()
        np.testing.assert_allclose(
            raw.kernel.lengthscales,
            model.hyperparameters.kernel.lengthscales * [4.0, 10.0],
        )
        self.assertAlmostEqual(
            raw.kernel.output_scale,
            model.hyperparameters.kernel.output_scale * model.transform.y_std ** 2,
        )

    @parameterized.expand([(gp.MATERN52, 0), (gp.RBF, 1), (gp.MATERN52, 3)])
    def test_fit_beats_generating_hyperparameters(self, family, seed):
        rng = np.random.default_rng(seed)
        ls, sf2, noise = np.array([0.3, 0.5]), 1.0, 0.01
        X = rng.random((40, 2))
        K = _dense_kernel(family, ls, sf2, X, X) + noise * np.eye(40)
        y = 0.5 + np.linalg.cholesky(K) @ rng.standard_normal(40)
        data = gp.Dataset(X, y)
        truth = gp.Hyperparameters(0.5, gp.KernelSpec(family, ls, sf2), noise)
        model = gp.fit_mle(data, family, seed=seed, n_restarts=10,
                           lower=[0, 0], upper=[1, 1])
        self.assertFalse(model.fallback)
        self.assertGreaterEqual(
            model.raw_log_likelihood(),
            gp.log_marginal_likelihood(truth, data) - 1e-6,
        )

    def test_constant_outputs_give_constant_mean(self):
        X = np.random.default_rng(4).random((8, 1))
        data = gp.Dataset(X, np.full(8, 5.0))
        model = gp.fit_mle(data, gp.MATERN52, seed=0, n_restarts=3,
                           lower=[0], upper=[1])
        self.assertAlmostEqual(model.raw_hyperparameters().mean_constant, 5.0,
                               delta=1e-3)
        mean, _ = model.predict([[0.05], [0.5], [0.95]])
        np.testing.assert_allclose(mean, 5.0, atol=1e-3)

    @mock.patch("envbo.gp.logger")
    @mock.patch("envbo.gp.optimize.minimize", side_effect=ValueError("boom"))
    def test_fallback_when_every_restart_fails(self, _, mock_logger):
        model = gp.fit_mle(self.data, gp.MATERN52, seed=0, n_restarts=2)
        self.assertTrue(model.fallback)
        self.assertTrue(mock_logger.warning.called)
        lengthscales = model.hyperparameters.kernel.lengthscales
        np.testing.assert_allclose(lengthscales, [0.5, 0.5])
        self.assertTrue(model.summary()["fallback"])

    def test_single_observation(self):
        data = gp.Dataset([[0.5]], [1.5])
        model = gp.fit_mle(
            data, gp.MATERN52, seed=0, n_restarts=2, lower=[0], upper=[1]
        )
        mean, variance = model.predict([[0.5]])
        self.assertTrue(np.isfinite(mean[0]) and np.isfinite(variance[0]))

    def test_empty_dataset(self):
        data = gp.Dataset(np.zeros((0, 1)), [])
        with self.assertRaises(errors.EmptyDatasetError):
            gp.fit_mle(data, gp.MATERN52)

    def test_keyword_only(self):
        with self.assertRaises(TypeError):
            gp.fit_mle(self.data, gp.MATERN52, 0)


class HyperparametersTest(unittest.TestCase):
    def test_vector_round_trip(self):
        hp = gp.Hyperparameters(0.3, gp.KernelSpec(gp.MATERN52, [0.2, 1.5], 2.0), 0.01)
        back = gp.Hyperparameters.from_vector(hp.to_vector(), gp.MATERN52)
        np.testing.assert_allclose(back.to_vector(), hp.to_vector())
        body = gp.Hyperparameters.from_dict(hp.to_dict()).to_dict()
        self.assertEqual(body, hp.to_dict())
        np.testing.assert_allclose(back.kernel.lengthscales, [0.2, 1.5])

    def test_negative_noise(self):
        with self.assertRaises(errors.InvalidArgumentError):
            gp.Hyperparameters(0.0, gp.KernelSpec(gp.RBF, [1.0], 1.0), -1.0)


if __name__ == "__main__":
    unittest.main()
