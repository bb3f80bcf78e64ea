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

"""Synthetic problems and the scoring protocol.

Campaigns are scored by how well their final surrogate predicts conditional
optima: environmental test values are drawn inside the effective domain
(the range of environmental values actually observed), the posterior mean
is maximized over the controllable inputs at each test value, and the
result is compared with the true conditional maximum by the mean absolute
percentage error (MAPE).
"""

__all__ = [
    "BenchmarkProblem",
    "EvalReport",
    "MannWhitneyResult",
    "levy2_negated",
    "hartmann6_negated",
    "levy_problem",
    "hartmann_problem",
    "get_problem",
    "add_noise",
    "mape",
    "effective_domain",
    "default_test_points",
    "evaluate_campaign",
    "truth_conditional_max",
    "mann_whitney_u",
    "ard_variability_fit",
]

import collections
import itertools
import logging
import math

import numpy as np
from scipy import special
from scipy import stats

from envbo import _helpers as util
from envbo import acqopt
from envbo import design
from envbo import envloop
from envbo import errors
from envbo import gp

logger = logging.getLogger(__name__)

LEVY = "levy"
HARTMANN = "hartmann"

# Environmental inputs of the Hartmann problem by number of env variables.
HARTMANN_ENV_INDICES = {1: (5,), 2: (0, 5), 3: (0, 3, 5)}

CHECKPOINT_EVERY = 10
TRUTH_SAMPLES = 100
TRUTH_STARTS = 100
TRUTH_GRID = 10000
_EXACT_MWU_LIMIT = 8

_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN_A = np.array(
    [
        [10.00, 3.00, 17.00, 3.50, 1.70, 8.00],
        [0.05, 10.00, 17.00, 0.10, 8.00, 14.00],
        [3.00, 3.50, 1.70, 10.00, 17.00, 8.00],
        [17.00, 8.00, 0.05, 10.00, 0.10, 14.00],
    ]
)
_HARTMANN_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def levy2_negated(x):
    """Negated two-dimensional Levy function; maximum 0 at (1, 1).

    Accepts a 2-vector or an n x 2 matrix of rows.
    """
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    w1 = w[..., 0]
    w2 = w[..., 1]
    value = (
        np.sin(np.pi * w1) ** 2
        + (w1 - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w1 + 1.0) ** 2)
        + (w2 - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w2) ** 2)
    )
    return -value


def hartmann6_negated(x):
    """Negated six-dimensional Hartmann function; maximum ~3.32.

    Accepts a 6-vector or an n x 6 matrix of rows.
    """
    x = np.asarray(x, dtype=float)
    sq = (x[..., None, :] - _HARTMANN_P) ** 2
    inner = np.sum(_HARTMANN_A * sq, axis=-1)
    return np.sum(_HARTMANN_ALPHA * np.exp(-inner), axis=-1)


class BenchmarkProblem(object):
    """A synthetic objective on a split domain.

    Attributes:
      name: str.
      truth: callable, the deterministic objective (vector or rows).
      domain: acqopt.Domain.
      noise_sd: float, standard deviation of the additive observation noise.
      step_limits: numpy.ndarray, default random-walk step per env variable.
      optimum: float or None, known global maximum of ``truth``.
    """

    def __init__(self, name, truth, domain, noise_sd=0.0, step_limits=None,
                 optimum=None, rng=None):
        self.name = name
        self.truth = truth
        self.domain = domain
        self.noise_sd = float(noise_sd)
        self.step_limits = (
            np.full(domain.n_env, 0.1)
            if step_limits is None
            else np.asarray(step_limits, dtype=float)
        )
        self.optimum = optimum
        self._rng = rng

    def __call__(self, x):
        """Observed value at ``x``: the truth plus noise when configured."""
        value = float(self.truth(np.asarray(x, dtype=float)))
        if self.noise_sd > 0:
            value += float(self._rng.normal(0.0, self.noise_sd))
        return value

    def values(self, X):
        """Noise-free values at the rows of ``X``."""
        return np.asarray(self.truth(np.atleast_2d(X)), dtype=float).reshape(-1)


def levy_problem():
    """Levy: x1 in [-7.5, 7.5] controllable, x2 in [-10, 10] environmental."""
    domain = acqopt.Domain([-7.5, -10.0], [7.5, 10.0], env_indices=(1,))
    return BenchmarkProblem(LEVY, levy2_negated, domain, step_limits=[1.5], optimum=0.0)


def hartmann_problem(env_indices=None, n_env=1):
    """Hartmann on [0, 1]^6.

    The environmental inputs default to x6, then x1 and x6, then x1, x4 and
    x6. The first environmental input walks with step 0.05, any further one
    with step 0.1.
    """
    if env_indices is None:
        if n_env not in HARTMANN_ENV_INDICES:
            raise errors.InvalidArgumentError("n_env must be 1, 2 or 3, got %r" % n_env)
        env_indices = HARTMANN_ENV_INDICES[n_env]
    env_indices = tuple(env_indices)
    domain = acqopt.Domain(np.zeros(6), np.ones(6), env_indices=env_indices)
    steps = [0.05] + [0.1] * (len(env_indices) - 1)
    return BenchmarkProblem(
        HARTMANN, hartmann6_negated, domain, step_limits=steps, optimum=3.32237
    )


def get_problem(name, env_indices=None):
    if name == LEVY:
        if env_indices not in (None, (1,), [1]):
            raise errors.InvalidArgumentError("Levy has x2 as its only env variable")
        return levy_problem()
    if name == HARTMANN:
        return hartmann_problem(env_indices=env_indices)
    raise errors.InvalidArgumentError("Unknown problem %r" % name)


def add_noise(problem, sigma, seed=0):
    """Copy of ``problem`` whose observations carry N(0, sigma^2) noise.

    Raises:
      envbo.errors.InvalidArgumentError: sigma < 0.
    """
    if not sigma >= 0:
        raise errors.InvalidArgumentError("sigma must be non-negative, got %r" % sigma)
    return BenchmarkProblem(
        problem.name,
        problem.truth,
        problem.domain,
        noise_sd=sigma,
        step_limits=problem.step_limits,
        optimum=problem.optimum,
        rng=util.make_rng(seed),
    )


def mape(pred, truth):
    """Mean absolute percentage error of ``pred`` against ``truth``.

    Raises:
      envbo.errors.ZeroTruthError: a true value is exactly zero.
      envbo.errors.DimensionMismatchError: lengths differ.
    """
    truth = util.as_vector(truth, "truth")
    pred = util.as_vector(pred, "pred", length=truth.shape[0])
    if np.any(truth == 0):
        raise errors.ZeroTruthError(
            "MAPE is undefined for a true value of 0 (index %d)"
            % int(np.flatnonzero(truth == 0)[0])
        )
    return float(np.mean(np.abs((pred - truth) / truth)))


def effective_domain(state):
    """(lower, upper) of the observed environmental values of ``state``."""
    env = state.env_history()
    if env.shape[0] == 0:
        raise errors.EmptyDatasetError("No observations, so no effective domain")
    return env.min(axis=0), env.max(axis=0)


def default_test_points(n_env):
    """25 test values per environmental variable: 25, 50, 75 for 1, 2, 3."""
    return 25 * max(int(n_env), 1)


def _test_values(lower, upper, m, seed):
    points = design.maximin_lhs(m, lower.shape[0], seed=seed).points
    return lower + points * (upper - lower)


@util.positional(2)
def truth_conditional_max(problem, env_values, seed=0, n_samples=TRUTH_SAMPLES,
                          n_starts=TRUTH_STARTS):
    """True maximum of ``problem`` over controllable inputs at ``env_values``.

    Multi-start bounded local maximization; with a single controllable
    input the result is cross-checked against a dense grid and the larger
    of the two is returned.
    """
    domain = problem.domain
    result = acqopt.maximize(
        problem.values,
        domain,
        env_values=env_values,
        seed=seed,
        n_samples=n_samples,
        n_starts=n_starts,
    )
    best = result.value
    if domain.n_ctrl == 1:
        grid = np.linspace(domain.ctrl_lower[0], domain.ctrl_upper[0], TRUTH_GRID)
        env = domain.split(result.x)[1]
        grid_max = float(np.max(problem.values(domain.embed(grid[:, None], env))))
        if grid_max > best + 1e-3:
            logger.warning(
                "Local search missed the conditional maximum at env %s "
                "(%.6g < grid %.6g)",
                list(env_values),
                best,
                grid_max,
            )
        best = max(best, grid_max)
    return best


class EvalReport(object):
    """Scores of one campaign.

    Attributes:
      checkpoints: list of (evaluations, mape) pairs, every 10 evaluations
        and at the end of the campaign.
      final_mape: float.
      lower, upper: numpy.ndarray, the effective domain per env variable.
      test_points: numpy.ndarray, m x n_E environmental test values.
      truth: numpy.ndarray, true conditional maxima at the test values.
      predicted: numpy.ndarray, predicted conditional maxima of the final
        surrogate.
      degenerate: bool, True when some env variable never changed.
    """

    def __init__(self, checkpoints, lower, upper, test_points, truth, predicted,
                 degenerate=False):
        self.checkpoints = checkpoints
        self.lower = lower
        self.upper = upper
        self.test_points = test_points
        self.truth = truth
        self.predicted = predicted
        self.degenerate = degenerate

    @property
    def final_mape(self):
        return self.checkpoints[-1][1]

    @property
    def widths(self):
        return self.upper - self.lower

    @property
    def domain_size(self):
        """Volume of the effective domain (its width for one variable)."""
        return float(np.prod(self.widths))


def _checkpoints(budget, every):
    points = list(range(every, budget + 1, every))
    if not points or points[-1] != budget:
        points.append(budget)
    return points


def _successes(trace, n):
    return sum(1 for record in trace[:n] if record.y is not None)


@util.positional(2)
def evaluate_campaign(state, problem, m=None, seed=0,
                      checkpoint_every=CHECKPOINT_EVERY,
                      n_samples=acqopt.DEFAULT_SAMPLES,
                      n_starts=acqopt.DEFAULT_STARTS):
    """Scores a finished campaign against the truth.

    Test values are a maximin Latin hypercube over the effective domain of
    the campaign. At every checkpoint the surrogate is refitted on the trace
    prefix and its conditional optima are compared with the true ones.

    Args:
      state: envloop.CampaignState, a finished campaign.
      problem: BenchmarkProblem the campaign ran on.
      m: int, number of test values; ``default_test_points`` when omitted.
      seed: int, seed of the test values.
      checkpoint_every: int.

    Returns:
      EvalReport
    """
    domain = problem.domain
    if m is None:
        m = default_test_points(domain.n_env)
    if m < 1:
        raise errors.InvalidArgumentError("m must be >= 1, got %d" % m)
    lower, upper = effective_domain(state)
    degenerate = bool(np.any(upper <= lower))
    if degenerate:
        logger.warning(
            "Degenerate effective domain [%s, %s]; test values collapse",
            lower.tolist(),
            upper.tolist(),
        )
    test_points = _test_values(lower, upper, m, seed)
    # Keep test values exactly inside the observed range.
    test_points = np.clip(test_points, lower, upper)
    truth = np.array(
        [truth_conditional_max(problem, env, seed=seed) for env in test_points]
    )

    checkpoints = []
    predicted = None
    for n in _checkpoints(state.evaluations_used, checkpoint_every):
        n_obs = _successes(state.trace, n)
        if n_obs < 1:
            continue
        model = envloop.fit_model(state, n=n_obs)
        predicted = np.array(
            [
                envloop.conditional_optimum(
                    model,
                    domain,
                    env,
                    seed=seed,
                    n_samples=n_samples,
                    n_starts=n_starts,
                )[1]
                for env in test_points
            ]
        )
        score = mape(predicted, truth)
        checkpoints.append((n, score))
        logger.debug("Checkpoint %d evaluations: MAPE %.4f", n, score)
    if not checkpoints:
        raise errors.EmptyDatasetError("Campaign has no successful evaluations")
    return EvalReport(
        checkpoints, lower, upper, test_points, truth, predicted, degenerate=degenerate
    )


MannWhitneyResult = collections.namedtuple("MannWhitneyResult", ["u", "p"])


def _u_statistic(ranks, n1):
    return float(np.sum(ranks[:n1]) - n1 * (n1 + 1) / 2.0)


def _exact_p(ranks, n1, u):
    n2 = ranks.shape[0] - n1
    centre = n1 * n2 / 2.0
    observed = abs(u - centre)
    hits = 0
    total = 0
    offset = n1 * (n1 + 1) / 2.0
    for subset in itertools.combinations(range(ranks.shape[0]), n1):
        total += 1
        if abs(np.sum(ranks[list(subset)]) - offset - centre) >= observed - 1e-9:
            hits += 1
    return hits / float(total)


def mann_whitney_u(sample_a, sample_b):
    """Two-sided Mann-Whitney U test.

    U counts the pairs in which ``sample_a`` exceeds ``sample_b`` (ties
    count one half). The p-value comes from the exact permutation
    distribution when both samples have at most 8 values, and from the
    normal approximation with tie correction otherwise.

    Returns:
      MannWhitneyResult(u, p)
    """
    a = util.as_vector(sample_a, "sample_a")
    b = util.as_vector(sample_b, "sample_b")
    if a.size == 0 or b.size == 0:
        raise errors.InvalidArgumentError("Both samples must be non-empty")
    n1, n2 = a.size, b.size
    ranks = stats.rankdata(np.concatenate([a, b]))
    u = _u_statistic(ranks, n1)
    if max(n1, n2) <= _EXACT_MWU_LIMIT:
        return MannWhitneyResult(u, min(1.0, _exact_p(ranks, n1, u)))

    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(counts ** 3 - counts)) / (n * (n - 1))
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if variance <= 0:
        return MannWhitneyResult(u, 1.0)
    z = abs(u - n1 * n2 / 2.0) / math.sqrt(variance)
    return MannWhitneyResult(u, float(min(1.0, 2.0 * special.ndtr(-z))))


VariabilityFit = collections.namedtuple(
    "VariabilityFit", ["lengthscales", "fallback"]
)


@util.positional(1)
def ard_variability_fit(problem, n_points=2000, seed=0, n_restarts=2):
    """ARD length-scales of a surrogate fitted to a large design.

    The clean objective is sampled on an ``n_points`` maximin Latin
    hypercube over the full domain; the fitted per-input length-scales (in
    original units) measure how quickly the objective varies along each
    input. Long length-scales mean low variability.

    Returns:
      VariabilityFit(lengthscales, fallback)
    """
    domain = problem.domain
    if n_points < domain.dim + 1:
        raise errors.InvalidArgumentError(
            "n_points must be at least d + 1 = %d" % (domain.dim + 1)
        )
    X = design.scale_to_bounds(
        design.maximin_lhs(n_points, domain.dim, seed=seed, n_candidates=10),
        domain.lower,
        domain.upper,
    )
    data = gp.Dataset(X, problem.values(X))
    model = gp.fit_mle(
        data,
        gp.MATERN52,
        seed=seed,
        n_restarts=n_restarts,
        lower=domain.lower,
        upper=domain.upper,
    )
    lengthscales = model.raw_hyperparameters().kernel.lengthscales_for(domain.dim)
    logger.info(
        "Variability fit length-scales: %s", np.round(lengthscales, 4).tolist()
    )
    return VariabilityFit(lengthscales, model.fallback)
