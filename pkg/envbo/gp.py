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

"""Gaussian process surrogate.

A constant-mean Gaussian process with a Matern-5/2 or squared-exponential
(RBF) kernel using one length-scale per input (automatic relevance
determination). Hyperparameters are estimated by maximising the log
marginal likelihood from several starting points; predictions come from the
Cholesky factor of the training covariance.

Inputs are mapped onto the unit cube using box bounds and outputs are
standardized before fitting. All hyperparameters stored on a fitted model
live in that normalized space; ``GpModel.raw_hyperparameters`` reports them
in the original units.

Example:

  data = Dataset(X, y)
  model = fit_mle(data, MATERN52, seed=0, lower=[0, 0], upper=[1, 1])
  mean, variance = posterior(model, X_test)
"""

__all__ = [
    "MATERN52",
    "RBF",
    "KernelSpec",
    "Hyperparameters",
    "Dataset",
    "InputTransform",
    "GpModel",
    "kernel_eval",
    "kernel_matrix",
    "log_marginal_likelihood",
    "build_model",
    "fit_mle",
    "posterior",
]

import logging
import math

import numpy as np
from scipy import linalg
from scipy import optimize

from envbo import _helpers as util
from envbo import design
from envbo import errors

logger = logging.getLogger(__name__)

MATERN52 = "matern52"
RBF = "rbf"
KERNEL_FAMILIES = frozenset([MATERN52, RBF])

_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)

# Jitter is relative to the mean diagonal of the noisy covariance.
JITTER_START = 1e-8
JITTER_MAX = 1e-4

DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 200
DEFAULT_GTOL = 1e-6

# Optimisation bounds in normalized space.
LOG_LENGTHSCALE_BOUNDS = (math.log(1e-3), math.log(1e3))
LOG_OUTPUT_SCALE_BOUNDS = (math.log(1e-6), math.log(1e3))
LOG_NOISE_BOUNDS = (math.log(1e-8), math.log(1.0))

# Sub-box of the bounds that restart points are drawn from.
_START_LOG_LENGTHSCALE = (math.log(0.05), math.log(2.0))
_START_LOG_OUTPUT_SCALE = (math.log(0.1), math.log(10.0))
_START_LOG_NOISE = (math.log(1e-6), math.log(1e-1))
_START_MEAN = (-1.0, 1.0)

_FALLBACK_LENGTHSCALE = 0.5
_FAILED_OBJECTIVE = 1e25


class KernelSpec(object):
    """Stationary covariance function.

    Attributes:
      family: str, MATERN52 or RBF.
      lengthscales: numpy.ndarray, one positive entry per input (ARD) or a
        single shared entry.
      output_scale: float, the signal variance sigma_f^2.
    """

    def __init__(self, family, lengthscales, output_scale):
        if family not in KERNEL_FAMILIES:
            raise errors.InvalidArgumentError("Unknown kernel family: %r" % family)
        lengthscales = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if lengthscales.ndim != 1 or lengthscales.size == 0:
            raise errors.InvalidArgumentError("lengthscales must be a 1-D vector")
        if not np.all(lengthscales > 0) or not np.all(np.isfinite(lengthscales)):
            raise errors.InvalidArgumentError(
                "lengthscales must be positive, got %s" % lengthscales.tolist()
            )
        if not (output_scale > 0 and np.isfinite(output_scale)):
            raise errors.InvalidArgumentError(
                "output_scale must be positive, got %r" % output_scale
            )
        self.family = family
        self.lengthscales = lengthscales
        self.output_scale = float(output_scale)

    @property
    def is_ard(self):
        return self.lengthscales.size > 1

    def lengthscales_for(self, d):
        """Length-scale vector broadcast to ``d`` inputs."""
        if self.lengthscales.size == 1:
            return np.full(d, self.lengthscales[0])
        if self.lengthscales.size != d:
            raise errors.DimensionMismatchError(
                "Kernel has %d length-scales but inputs have %d dimensions"
                % (self.lengthscales.size, d)
            )
        return self.lengthscales

    def to_dict(self):
        return {
            "family": self.family,
            "lengthscales": self.lengthscales.tolist(),
            "output_scale": self.output_scale,
        }

    @classmethod
    def from_dict(cls, body):
        return cls(body["family"], body["lengthscales"], body["output_scale"])


class Hyperparameters(object):
    """The hyperparameters {c, sigma_f^2, l, sigma_y^2} of the surrogate.

    Attributes:
      mean_constant: float, the constant prior mean c.
      kernel: KernelSpec, carries sigma_f^2 and the length-scales.
      noise_variance: float, sigma_y^2 >= 0.
    """

    def __init__(self, mean_constant, kernel, noise_variance):
        if not (noise_variance >= 0 and np.isfinite(noise_variance)):
            raise errors.InvalidArgumentError(
                "noise_variance must be non-negative, got %r" % noise_variance
            )
        self.mean_constant = float(mean_constant)
        self.kernel = kernel
        self.noise_variance = float(noise_variance)

    def to_vector(self):
        """Packs into [c, log sigma_f^2, log l_1..l_p, log sigma_y^2]."""
        return np.concatenate(
            [
                [self.mean_constant, math.log(self.kernel.output_scale)],
                np.log(self.kernel.lengthscales),
                [math.log(max(self.noise_variance, 1e-300))],
            ]
        )

    @classmethod
    def from_vector(cls, theta, family):
        theta = np.asarray(theta, dtype=float)
        kernel = KernelSpec(family, np.exp(theta[2:-1]), math.exp(theta[1]))
        return cls(theta[0], kernel, math.exp(theta[-1]))

    def to_dict(self):
        return {
            "mean_constant": self.mean_constant,
            "kernel": self.kernel.to_dict(),
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, body):
        return cls(
            body["mean_constant"],
            KernelSpec.from_dict(body["kernel"]),
            body["noise_variance"],
        )


class Dataset(object):
    """Observation pairs D_n = {(x_i, y_i)}.

    Attributes:
      inputs: numpy.ndarray, n x d.
      outputs: numpy.ndarray, length n.
    """

    def __init__(self, inputs, outputs):
        outputs = util.as_vector(outputs, "outputs")
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(outputs.shape[0], -1)
        inputs = util.as_matrix(inputs, "inputs")
        if inputs.shape[0] != outputs.shape[0]:
            raise errors.DimensionMismatchError(
                "Dataset has %d inputs but %d outputs"
                % (inputs.shape[0], outputs.shape[0])
            )
        self.inputs = inputs
        self.outputs = outputs

    def __len__(self):
        return self.outputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def append(self, x, y):
        """Returns a new Dataset with (x, y) added."""
        x = util.as_vector(x, "x", length=self.dim)
        return Dataset(
            np.vstack([self.inputs, x]), np.append(self.outputs, float(y))
        )

    def head(self, n):
        """Returns the first ``n`` observations."""
        return Dataset(self.inputs[:n], self.outputs[:n])


class InputTransform(object):
    """Unit-cube input scaling and output standardization.

    Attributes:
      lower, upper: numpy.ndarray, box bounds mapped onto [0, 1].
      y_mean, y_std: float, output location and scale.
    """

    def __init__(self, lower, upper, y_mean=0.0, y_std=1.0):
        self.lower = util.as_vector(lower, "lower")
        self.upper = util.as_vector(upper, "upper", length=self.lower.shape[0])
        if np.any(self.lower >= self.upper):
            raise errors.InvalidArgumentError("InputTransform bounds are degenerate")
        if not y_std > 0:
            raise errors.InvalidArgumentError("y_std must be positive")
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def from_data(cls, data, lower=None, upper=None):
        """Builds the transform for ``data``.

        Missing bounds default to the data range; a constant column is
        widened to unit width. A constant (or single) output keeps unit
        scale.
        """
        if lower is None or upper is None:
            lower = data.inputs.min(axis=0)
            upper = data.inputs.max(axis=0)
            flat = upper - lower <= 0
            lower = np.where(flat, lower - 0.5, lower)
            upper = np.where(flat, upper + 0.5, upper)
        y_std = float(np.std(data.outputs))
        if not y_std > 1e-12:
            y_std = 1.0
        return cls(lower, upper, float(np.mean(data.outputs)), y_std)

    @property
    def width(self):
        return self.upper - self.lower

    def to_unit(self, X):
        return (X - self.lower) / self.width

    def standardize(self, y):
        return (y - self.y_mean) / self.y_std

    def to_dict(self):
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }


def _sq_diff(X1, X2, i, lengthscale):
    diff = (X1[:, i][:, None] - X2[:, i][None, :]) / lengthscale
    return diff * diff


def kernel_matrix(spec, X1, X2):
    """Covariance matrix between the rows of ``X1`` and ``X2``."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise errors.DimensionMismatchError(
            "Inputs have %d and %d columns" % (X1.shape[1], X2.shape[1])
        )
    ls = spec.lengthscales_for(X1.shape[1])
    r2 = np.zeros((X1.shape[0], X2.shape[0]))
    for i in range(X1.shape[1]):
        r2 += _sq_diff(X1, X2, i, ls[i])
    return _kernel_from_r2(spec, r2)


def _kernel_from_r2(spec, r2):
    if spec.family == RBF:
        return spec.output_scale * np.exp(-0.5 * r2)
    r = np.sqrt(np.maximum(r2, 0.0))
    return spec.output_scale * (1.0 + _SQRT5 * r + 5.0 / 3.0 * r2) * np.exp(-_SQRT5 * r)


def kernel_eval(spec, x, x2):
    """Kernel value k(x, x2).

    Matern-5/2: sigma_f^2 (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r), RBF:
    sigma_f^2 exp(-r^2 / 2), where r is the length-scale weighted distance.
    """
    x = util.as_vector(x, "x")
    x2 = util.as_vector(x2, "x2", length=x.shape[0])
    return float(kernel_matrix(spec, x.reshape(1, -1), x2.reshape(1, -1))[0, 0])


def _factorize(K):
    """Cholesky factor of ``K`` with escalating diagonal jitter.

    Returns:
      (L, jitter): lower-triangular factor of K + jitter * I.

    Raises:
      envbo.errors.SingularCovarianceError: still not positive definite at
        the maximum jitter level.
    """
    scale = float(np.mean(np.diag(K)))
    if not scale > 0:
        scale = 1.0
    jitter = JITTER_START * scale
    eye = np.eye(K.shape[0])
    while True:
        try:
            L = linalg.cholesky(K + jitter * eye, lower=True, check_finite=True)
            return L, jitter
        except (linalg.LinAlgError, ValueError):
            if jitter >= JITTER_MAX * scale * (1 - 1e-12):
                raise errors.SingularCovarianceError(jitter, n=K.shape[0])
            logger.debug("Cholesky failed with jitter %.3g, escalating", jitter)
            jitter = min(jitter * 10.0, JITTER_MAX * scale)


def _noisy_covariance(hp, X):
    return kernel_matrix(hp.kernel, X, X) + hp.noise_variance * np.eye(X.shape[0])


def log_marginal_likelihood(hp, data, eval_gradient=False):
    """Log marginal likelihood of ``data`` under ``hp``.

    -1/2 (y - c)^T [K + s I]^-1 (y - c) - 1/2 log|K + s I| - n/2 log 2 pi,
    evaluated through a Cholesky factor.

    Args:
      hp: Hyperparameters.
      data: Dataset, used as given (no normalization).
      eval_gradient: bool, also return the gradient with respect to
        [c, log sigma_f^2, log l_1..l_p, log sigma_y^2].

    Returns:
      float, or (float, numpy.ndarray) when eval_gradient is set.

    Raises:
      envbo.errors.SingularCovarianceError
    """
    X = data.inputs
    n, d = X.shape
    K = _noisy_covariance(hp, X)
    L, _ = _factorize(K)
    resid = data.outputs - hp.mean_constant
    alpha = linalg.cho_solve((L, True), resid)
    value = (
        -0.5 * float(resid @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * _LOG_2PI
    )
    if not eval_gradient:
        return value

    K_inv = linalg.cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - K_inv
    spec = hp.kernel
    ls = spec.lengthscales_for(d)
    sq = [_sq_diff(X, X, i, ls[i]) for i in range(d)]
    r2 = np.sum(sq, axis=0)
    K_f = _kernel_from_r2(spec, r2)
    if spec.family == RBF:
        # dk/dlog l_i = k (dx_i / l_i)^2
        weight = K_f
    else:
        r = np.sqrt(r2)
        weight = (
            spec.output_scale * 5.0 / 3.0 * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
        )
    ls_grads = np.array([0.5 * np.sum(W * weight * s) for s in sq])
    if not spec.is_ard:
        ls_grads = np.array([ls_grads.sum()])

    grad = np.concatenate(
        [
            [float(np.sum(alpha)), 0.5 * float(np.sum(W * K_f))],
            ls_grads,
            [0.5 * hp.noise_variance * float(np.trace(W))],
        ]
    )
    return value, grad


class GpModel(object):
    """A fitted Gaussian process.

    The model is immutable once built; it may be shared between readers.

    Attributes:
      hyperparameters: Hyperparameters in normalized space.
      data: Dataset in original units.
      transform: InputTransform between original and normalized space.
      factor: numpy.ndarray, lower Cholesky factor of the normalized
        training covariance (noise and jitter included).
      jitter: float, diagonal jitter that made the factorization succeed.
      log_likelihood: float, log marginal likelihood in normalized space.
      fallback: bool, True when MLE failed and prior hyperparameters are used.
    """

    def __init__(self, hyperparameters, data, transform, factor, jitter, alpha,
                 log_likelihood, fallback=False):
        self.hyperparameters = hyperparameters
        self.data = data
        self.transform = transform
        self.factor = factor
        self.jitter = jitter
        self._alpha = alpha
        self._unit_inputs = transform.to_unit(data.inputs)
        self.log_likelihood = log_likelihood
        self.fallback = fallback

    @property
    def dim(self):
        return self.data.dim

    def raw_log_likelihood(self):
        """Log marginal likelihood of the data in original output units."""
        return self.log_likelihood - len(self.data) * math.log(self.transform.y_std)

    def raw_hyperparameters(self):
        """Hyperparameters expressed in original input and output units."""
        hp = self.hyperparameters
        t = self.transform
        ls = hp.kernel.lengthscales_for(self.dim) * t.width
        kernel = KernelSpec(hp.kernel.family, ls, hp.kernel.output_scale * t.y_std ** 2)
        return Hyperparameters(
            hp.mean_constant * t.y_std + t.y_mean,
            kernel,
            hp.noise_variance * t.y_std ** 2,
        )

    def predict(self, X_star):
        """Posterior mean and variance of the latent function at ``X_star``."""
        X_star = util.as_matrix(X_star, "X_star", columns=self.dim)
        hp = self.hyperparameters
        Z = self.transform.to_unit(X_star)
        K_star = kernel_matrix(hp.kernel, self._unit_inputs, Z)
        mean = hp.mean_constant + K_star.T @ self._alpha
        v = linalg.solve_triangular(self.factor, K_star, lower=True, check_finite=False)
        variance = hp.kernel.output_scale - np.sum(v * v, axis=0)
        variance = np.maximum(variance, 0.0)
        t = self.transform
        return mean * t.y_std + t.y_mean, variance * t.y_std ** 2

    def summary(self):
        """JSON-friendly description for run traces."""
        return {
            "hyperparameters": self.raw_hyperparameters().to_dict(),
            "log_likelihood": self.raw_log_likelihood(),
            "n": len(self.data),
            "fallback": self.fallback,
        }


@util.positional(2)
def build_model(hp, data, transform=None, fallback=False):
    """Conditions a Gaussian process with fixed hyperparameters on ``data``.

    Args:
      hp: Hyperparameters, in the space defined by ``transform``.
      data: Dataset in original units.
      transform: InputTransform; identity (no scaling) when omitted.
      fallback: bool, marks the model as built from fallback hyperparameters.

    Returns:
      GpModel
    """
    if transform is None:
        transform = InputTransform.identity(data.dim)
    Z = transform.to_unit(data.inputs)
    ys = transform.standardize(data.outputs)
    K = _noisy_covariance(hp, Z)
    L, jitter = _factorize(K)
    resid = ys - hp.mean_constant
    alpha = linalg.cho_solve((L, True), resid)
    value = (
        -0.5 * float(resid @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * len(ys) * _LOG_2PI
    )
    return GpModel(hp, data, transform, L, jitter, alpha, value, fallback=fallback)


def _theta_bounds(ys, d):
    spread = float(np.std(ys))
    if not spread > 0:
        spread = 1.0
    c_bounds = (float(np.min(ys)) - 3.0 * spread, float(np.max(ys)) + 3.0 * spread)
    return [c_bounds, LOG_OUTPUT_SCALE_BOUNDS] + [LOG_LENGTHSCALE_BOUNDS] * d + [
        LOG_NOISE_BOUNDS
    ]


def _start_box(bounds, d):
    box = [_START_MEAN, _START_LOG_OUTPUT_SCALE] + [_START_LOG_LENGTHSCALE] * d + [
        _START_LOG_NOISE
    ]
    lower = np.array([max(b[0], s[0]) for b, s in zip(bounds, box)])
    upper = np.array([min(b[1], s[1]) for b, s in zip(bounds, box)])
    # keep the box non-degenerate when the data bounds are tighter
    upper = np.where(upper > lower, upper, lower + 1e-9)
    return lower, upper


def _fallback_hyperparameters(family, d):
    # Standardized outputs have unit variance.
    kernel = KernelSpec(family, np.full(d, _FALLBACK_LENGTHSCALE), 1.0)
    return Hyperparameters(0.0, kernel, 1e-6)


@util.positional(2)
def fit_mle(data, kernel_family=MATERN52, seed=0, n_restarts=DEFAULT_RESTARTS,
            lower=None, upper=None, max_iter=DEFAULT_MAX_ITER):
    """Fits hyperparameters by maximum likelihood.

    Runs ``n_restarts`` bounded L-BFGS-B ascents on the log marginal
    likelihood from maximin Latin hypercube starting points in
    log-hyperparameter space and keeps the best; ties go to the earliest
    restart. If every restart fails numerically the model is built from
    fallback prior hyperparameters and flagged.

    Args:
      data: Dataset with at least one observation.
      kernel_family: str, MATERN52 or RBF.
      seed: int or numpy.random.Generator for the restart design.
      n_restarts: int, number of ascents.
      lower, upper: input bounds used to normalize inputs; the data range
        when omitted.
      max_iter: int, iteration cap for each ascent.

    Returns:
      GpModel
    """
    if len(data) < 1:
        raise errors.EmptyDatasetError("Cannot fit a Gaussian process to no data")
    if kernel_family not in KERNEL_FAMILIES:
        raise errors.InvalidArgumentError("Unknown kernel family: %r" % kernel_family)
    d = data.dim
    transform = InputTransform.from_data(data, lower, upper)
    unit = Dataset(transform.to_unit(data.inputs), transform.standardize(data.outputs))
    bounds = _theta_bounds(unit.outputs, d)
    start_lower, start_upper = _start_box(bounds, d)
    starts = design.scale_to_bounds(
        design.maximin_lhs(max(n_restarts, 1), len(bounds), seed=seed),
        start_lower,
        start_upper,
    )

    def objective(theta):
        try:
            hp = Hyperparameters.from_vector(theta, kernel_family)
            value, grad = log_marginal_likelihood(hp, unit, eval_gradient=True)
        except (errors.Error, linalg.LinAlgError, FloatingPointError, ValueError):
            return _FAILED_OBJECTIVE, np.zeros_like(theta)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return _FAILED_OBJECTIVE, np.zeros_like(theta)
        return -value, -grad

    best_theta = None
    best_value = -np.inf
    for restart, theta0 in enumerate(starts):
        try:
            result = optimize.minimize(
                objective,
                theta0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": max_iter, "gtol": DEFAULT_GTOL},
            )
        except (ValueError, FloatingPointError) as e:
            logger.debug("MLE restart %d raised %r", restart, e)
            continue
        value = -float(result.fun)
        if result.fun >= _FAILED_OBJECTIVE or not np.isfinite(value):
            logger.debug("MLE restart %d failed numerically", restart)
            continue
        logger.debug("MLE restart %d: log-likelihood %.6g", restart, value)
        if value > best_value:
            best_value = value
            best_theta = np.clip(
                result.x, [b[0] for b in bounds], [b[1] for b in bounds]
            )

    if best_theta is not None:
        hp = Hyperparameters.from_vector(best_theta, kernel_family)
        try:
            return build_model(hp, data, transform=transform)
        except errors.SingularCovarianceError as e:
            logger.debug("Best MLE hyperparameters are singular: %r", e)

    logger.warning(
        "All %d MLE restarts failed on %d points; using fallback hyperparameters",
        n_restarts,
        len(data),
    )
    return build_model(
        _fallback_hyperparameters(kernel_family, d),
        data,
        transform=transform,
        fallback=True,
    )


def posterior(model, X_star):
    """Posterior predictive mean and variance at the rows of ``X_star``.

    Variances are clamped at zero.

    Raises:
      envbo.errors.DimensionMismatchError: column count differs from the
        training inputs.
    """
    return model.predict(X_star)
