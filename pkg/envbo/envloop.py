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

"""Optimization campaigns.

Three engines share one campaign state:

  run_bo:     standard Bayesian optimization from a space-filling design,
              every input controllable.
  run_envbo:  Bayesian optimization with environmental variables. A single
              initial point, then a global surrogate over all inputs whose
              acquisition is maximized conditionally on the measured
              environmental values.
  run_random: environmental values from the same source, controllable
              values drawn uniformly at random.

``suggest`` and ``observe`` expose the ENVBO iteration as an ask-tell pair so
that an external process can own measurement and evaluation.
"""

__all__ = [
    "RunRecord",
    "CampaignState",
    "run_bo",
    "run_envbo",
    "run_random",
    "suggest",
    "initial_point",
    "observe",
    "conditional_optimum",
    "fit_model",
    "default_n0",
]

import logging
import time

import numpy as np

from envbo import _helpers as util
from envbo import acqopt
from envbo import design
from envbo import envsim
from envbo import errors
from envbo import gp

LOGGER = logging.getLogger(__name__)

OK = "ok"
FAILED = "failed"

METHOD_BO = "bo"
METHOD_ENVBO = "envbo"
METHOD_RANDOM = "random"

DEFAULT_MLE_RESTARTS = gp.DEFAULT_RESTARTS
MAX_RANDOM_DRAWS = 10000


class RunRecord(object):
    """One evaluation of the objective in a campaign trace.

    Attributes:
      step: int, position in the trace.
      env: list of float, environmental measurement (empty for plain BO).
      ctrl: list of float, controllable values.
      x: list of float, the full input vector.
      y: float or None, the observation; None when the evaluation failed.
      hyperparameters: dict or None, raw-space model summary used to choose x.
      acquisition_value: float or None.
      wall_time: float, seconds spent on this step.
      status: str, "ok" or "failed".
    """

    _FIELDS = (
        "step",
        "env",
        "ctrl",
        "x",
        "y",
        "hyperparameters",
        "acquisition_value",
        "wall_time",
        "status",
    )

    def __init__(self, step, env, ctrl, x, y, hyperparameters=None,
                 acquisition_value=None, wall_time=0.0, status=OK):
        self.step = int(step)
        self.env = [float(v) for v in env]
        self.ctrl = [float(v) for v in ctrl]
        self.x = [float(v) for v in x]
        self.y = None if y is None else float(y)
        self.hyperparameters = hyperparameters
        self.acquisition_value = (
            None if acquisition_value is None else float(acquisition_value)
        )
        self.wall_time = float(wall_time)
        self.status = status

    def to_dict(self):
        return dict((name, getattr(self, name)) for name in self._FIELDS)

    @classmethod
    def from_dict(cls, body):
        unknown = set(body) - set(cls._FIELDS)
        if unknown:
            raise errors.SessionError("Unknown trace fields: %s" % sorted(unknown))
        return cls(**body)

    def __eq__(self, other):
        return isinstance(other, RunRecord) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "RunRecord(step=%d, x=%s, y=%r, status=%s)" % (
            self.step,
            self.x,
            self.y,
            self.status,
        )


class CampaignState(object):
    """Everything needed to continue or analyse a campaign.

    Attributes:
      domain: acqopt.Domain.
      acq: acquisition.AcquisitionSpec; y_best is refreshed every iteration.
      budget: int, total number of evaluations N.
      kernel_family: str, gp.MATERN52 or gp.RBF.
      seed: int, master seed; per-step seeds derive from it.
      dataset: gp.Dataset or None, the successful observations.
      trace: list of RunRecord, one per consumed evaluation.
      method: str, the engine that drives the campaign.
      constraints: acqopt.ConstraintSet applied to suggestions.
      env_walk: envsim.EnvWalk or None, the walk feeding the campaign.
      mle_restarts, n_samples, n_starts: int, optimizer settings.
    """

    def __init__(self, domain, acq, budget, kernel_family=gp.MATERN52, seed=0,
                 method=METHOD_ENVBO, constraints=None,
                 mle_restarts=DEFAULT_MLE_RESTARTS,
                 n_samples=acqopt.DEFAULT_SAMPLES, n_starts=acqopt.DEFAULT_STARTS):
        if budget < 1:
            raise errors.InvalidArgumentError("budget must be >= 1, got %d" % budget)
        self.domain = domain
        self.acq = acq
        self.budget = int(budget)
        self.kernel_family = kernel_family
        self.seed = int(seed)
        self.method = method
        self.constraints = constraints or acqopt.ConstraintSet()
        self.mle_restarts = int(mle_restarts)
        self.n_samples = int(n_samples)
        self.n_starts = int(n_starts)
        self.dataset = None
        self.trace = []
        self.env_walk = None

    @property
    def evaluations_used(self):
        return len(self.trace)

    @property
    def remaining(self):
        return self.budget - self.evaluations_used

    @property
    def n_observations(self):
        return 0 if self.dataset is None else len(self.dataset)

    def best(self):
        """The (x*, y*) pair with the highest observation; first wins ties."""
        if self.dataset is None:
            raise errors.EmptyDatasetError("The campaign has no observations yet")
        index = int(np.argmax(self.dataset.outputs))
        return self.dataset.inputs[index].copy(), float(self.dataset.outputs[index])

    def env_history(self):
        """Environmental values of the successful observations (n x n_E)."""
        if self.dataset is None:
            return np.zeros((0, self.domain.n_env))
        return self.dataset.inputs[:, list(self.domain.env_indices)]

    def step_seed(self, step):
        return _step_seed(self.seed, step)


def _step_seed(seed, step):
    sequence = np.random.SeedSequence([int(seed), int(step)])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def default_n0(budget, dim):
    """Initial design size 5 d, capped at a quarter of the budget (>= 1)."""
    return max(1, min(5 * dim, budget // 4))


@util.positional(1)
def fit_model(state, n=None, seed=None):
    """Fits the surrogate to the first ``n`` observations of ``state``.

    The default seed is the one used for the final fit of the campaign, so
    refits on trace prefixes are comparable.
    """
    if state.dataset is None:
        raise errors.EmptyDatasetError("Cannot fit a model before any observation")
    data = state.dataset if n is None else state.dataset.head(n)
    if len(data) < 1:
        raise errors.EmptyDatasetError("Cannot fit a model to an empty prefix")
    return gp.fit_mle(
        data,
        state.kernel_family,
        seed=state.step_seed(state.budget) if seed is None else seed,
        n_restarts=state.mle_restarts,
        lower=state.domain.lower,
        upper=state.domain.upper,
    )


def _propose(state, env_values):
    """Fits the surrogate and maximizes the acquisition at ``env_values``."""
    if state.dataset is None:
        raise errors.EmptyDatasetError(
            "suggest needs at least one observation; observe an initial point first"
        )
    seed = state.step_seed(state.evaluations_used)
    model = gp.fit_mle(
        state.dataset,
        state.kernel_family,
        seed=seed,
        n_restarts=state.mle_restarts,
        lower=state.domain.lower,
        upper=state.domain.upper,
    )
    acq = state.acq
    if acq.needs_best:
        acq = acq.with_best(float(np.max(state.dataset.outputs)))
    result = acqopt.maximize_conditional(
        model,
        acq,
        state.domain,
        env_values,
        constraints=state.constraints,
        seed=seed,
        n_samples=state.n_samples,
        n_starts=state.n_starts,
    )
    return result, model


def suggest(state, env_measurement=None):
    """Returns the next full input vector for ``env_measurement``.

    Fits the surrogate and maximizes the acquisition conditionally on the
    measurement. Consumes no budget and leaves ``state`` unchanged.

    Raises:
      envbo.errors.EmptyDatasetError: no observation yet.
      envbo.errors.DimensionMismatchError: measurement of the wrong length.
    """
    result, _ = _propose(state, env_measurement)
    return result.x


@util.positional(3)
def observe(state, x_full, y, acquisition_value=None, hyperparameters=None,
            wall_time=0.0):
    """Appends the observation (x_full, y) and consumes one evaluation.

    Args:
      state: CampaignState.
      x_full: vector inside the domain.
      y: float, or None to record a failed evaluation.

    Returns:
      The updated CampaignState (the same object).
    """
    x = state.domain.check_point(x_full)
    if y is not None:
        try:
            y = float(y)
        except (TypeError, ValueError):
            raise errors.InvalidArgumentError("Observation must be numeric: %r" % (y,))
        if not np.isfinite(y):
            raise errors.InvalidArgumentError("Observation must be finite: %r" % y)
    if state.remaining <= 0:
        LOGGER.warning(
            "Observation beyond the budget of %d evaluations recorded", state.budget
        )
    ctrl, env = state.domain.split(x)
    state.trace.append(
        RunRecord(
            state.evaluations_used,
            env,
            ctrl,
            x,
            y,
            hyperparameters=hyperparameters,
            acquisition_value=acquisition_value,
            wall_time=wall_time,
            status=OK if y is not None else FAILED,
        )
    )
    if y is not None:
        if state.dataset is None:
            state.dataset = gp.Dataset(x.reshape(1, -1), [y])
        else:
            state.dataset = state.dataset.append(x, y)
    return state


def _call_objective(objective, x):
    try:
        y = float(objective(x))
    except Exception as e:
        raise errors.ObjectiveError(x, cause=e)
    if not np.isfinite(y):
        raise errors.ObjectiveError(x, cause=ValueError("non-finite value %r" % y))
    return y


def _evaluate(state, objective, candidates, started, acquisition_value=None,
              hyperparameters=None):
    """Evaluates the first candidate, retrying once with the next one.

    A failure that is not retried consumes an evaluation and is recorded
    with y = None.
    """
    candidates = [c for c in candidates if c is not None][:2]
    for attempt, x in enumerate(candidates):
        try:
            y = _call_objective(objective, x)
        except errors.ObjectiveError as e:
            if attempt + 1 < len(candidates):
                LOGGER.warning("%s; retrying with the next-best start", e)
                continue
            LOGGER.warning("%s; evaluation recorded as missing", e)
            y = None
        observe(
            state,
            x,
            y,
            acquisition_value=acquisition_value if attempt == 0 else None,
            hyperparameters=hyperparameters,
            wall_time=time.perf_counter() - started,
        )
        return y


def _log_step(state):
    record = state.trace[-1]
    LOGGER.debug(
        "%s step %d/%d env=%s y=%s acq=%s incumbent=%s",
        state.method,
        record.step + 1,
        state.budget,
        record.env,
        record.y,
        record.acquisition_value,
        None if state.dataset is None else float(np.max(state.dataset.outputs)),
    )


def _model_step(state, objective, env_values):
    started = time.perf_counter()
    result, model = _propose(state, env_values)
    alternatives = result.alternatives[:1] if result.alternatives else [None]
    _evaluate(
        state,
        objective,
        [result.x] + alternatives,
        started,
        acquisition_value=result.value,
        hyperparameters=model.summary(),
    )
    _log_step(state)


def _random_point(state, rng, env_values):
    """Uniform controllable values at ``env_values``, redrawn until feasible."""
    domain = state.domain
    for _ in range(MAX_RANDOM_DRAWS):
        ctrl = domain.ctrl_lower + rng.random(domain.n_ctrl) * (
            domain.ctrl_upper - domain.ctrl_lower
        )
        x = domain.embed(ctrl, env_values)[0]
        if state.constraints.is_feasible(x):
            return x
    LOGGER.warning(
        "No feasible random point in %d draws; using the last one", MAX_RANDOM_DRAWS
    )
    return x


def initial_point(state, env_measurement):
    """First input of an ENVBO campaign: uniform controllable values.

    Draws from the generator seeded with the campaign seed, the same stream
    ``run_envbo`` uses, so an ask-tell session and an in-process run start
    from the same point. Draws that violate the campaign constraints are
    replaced by the next draw.
    """
    env = state.domain.check_env(env_measurement)
    return _random_point(state, util.make_rng(state.seed), env)


def _random_step(state, objective, env_values, rng):
    started = time.perf_counter()
    x = _random_point(state, rng, env_values)
    _evaluate(state, objective, [x], started)
    _log_step(state)


@util.positional(4)
def run_bo(objective, domain, acq, budget, n0=None, seed=0,
           kernel_family=gp.MATERN52, constraints=None,
           mle_restarts=DEFAULT_MLE_RESTARTS, n_samples=acqopt.DEFAULT_SAMPLES,
           n_starts=acqopt.DEFAULT_STARTS):
    """Standard Bayesian optimization over a fully controllable domain.

    ``n0`` maximin Latin hypercube points are evaluated first, then the
    surrogate is refitted and the acquisition maximized for every remaining
    evaluation.

    Args:
      objective: callable, full input vector -> float.
      domain: acqopt.Domain without environmental dimensions.
      acq: acquisition.AcquisitionSpec.
      budget: int, total number of evaluations N.
      n0: int, initial design size; ``default_n0`` when omitted.
      seed: int.

    Returns:
      CampaignState
    """
    if domain.n_env:
        raise errors.InvalidArgumentError(
            "run_bo needs a fully controllable domain; freeze environmental "
            "values into the objective"
        )
    if n0 is None:
        n0 = default_n0(budget, domain.dim)
    if not 1 <= n0 <= budget:
        raise errors.InvalidArgumentError(
            "Need 1 <= n0 <= budget, got n0=%d budget=%d" % (n0, budget)
        )
    state = CampaignState(
        domain,
        acq,
        budget,
        kernel_family=kernel_family,
        seed=seed,
        method=METHOD_BO,
        constraints=constraints,
        mle_restarts=mle_restarts,
        n_samples=n_samples,
        n_starts=n_starts,
    )
    LOGGER.info("BO campaign: budget %d, %d initial points, seed %d", budget, n0, seed)
    initial = design.scale_to_bounds(
        design.maximin_lhs(n0, domain.dim, seed=seed), domain.lower, domain.upper
    )
    for x in initial:
        _evaluate(state, objective, [x], time.perf_counter())
        _log_step(state)
    while state.remaining > 0:
        if state.dataset is None:
            # every initial point failed
            rng = util.make_rng(state.step_seed(state.evaluations_used))
            _random_step(state, objective, [], rng)
            continue
        _model_step(state, objective, [])
    LOGGER.info("BO campaign finished: best y %s", _best_or_none(state))
    return state


def _best_or_none(state):
    return None if state.dataset is None else state.best()[1]


def _start_campaign(domain, env_source, budget, method, **kwargs):
    if domain.n_env < 1:
        raise errors.InvalidArgumentError(
            "%s needs at least one environmental dimension" % method
        )
    state = CampaignState(domain, budget=budget, method=method, **kwargs)
    if isinstance(env_source, envsim.EnvWalk):
        state.env_walk = env_source
    return state, envsim.measurements(env_source)


def _next_env(source, state):
    try:
        env = next(source)
    except StopIteration:
        raise errors.InvalidArgumentError(
            "Environmental source exhausted after %d measurements"
            % state.evaluations_used
        )
    return state.domain.check_env(env)


@util.positional(5)
def run_envbo(objective, domain, env_source, acq, budget, seed=0,
              kernel_family=gp.MATERN52, constraints=None,
              mle_restarts=DEFAULT_MLE_RESTARTS, n_samples=acqopt.DEFAULT_SAMPLES,
              n_starts=acqopt.DEFAULT_STARTS):
    """Bayesian optimization conditioned on measured environmental values.

    The campaign starts from a single point whose environmental values are
    measured and whose controllable values are drawn uniformly. Every later
    iteration fits a surrogate over all inputs, measures the environment and
    maximizes the acquisition over the controllable inputs only. The budget
    counts every evaluation including the initial one.

    Args:
      objective: callable, full input vector -> float.
      domain: acqopt.Domain with at least one environmental dimension.
      env_source: envsim.EnvWalk or an iterable of measurements.
      acq: acquisition.AcquisitionSpec.
      budget: int, total number of evaluations N.
      seed: int.

    Returns:
      CampaignState
    """
    if budget < 2:
        raise errors.InvalidArgumentError(
            "ENVBO needs a budget of at least 2 evaluations, got %d" % budget
        )
    state, source = _start_campaign(
        domain,
        env_source,
        budget,
        METHOD_ENVBO,
        acq=acq,
        kernel_family=kernel_family,
        seed=seed,
        constraints=constraints,
        mle_restarts=mle_restarts,
        n_samples=n_samples,
        n_starts=n_starts,
    )
    LOGGER.info("ENVBO campaign: budget %d, seed %d", budget, seed)
    rng = util.make_rng(seed)
    while state.remaining > 0:
        env = _next_env(source, state)
        if state.dataset is None:
            _random_step(state, objective, env, rng)
        else:
            _model_step(state, objective, env)
    LOGGER.info("ENVBO campaign finished: best y %s", _best_or_none(state))
    return state


@util.positional(5)
def run_random(objective, domain, env_source, acq, budget, seed=0,
               kernel_family=gp.MATERN52, mle_restarts=DEFAULT_MLE_RESTARTS):
    """Random benchmark: measured environment, uniform controllable values.

    Draws from the same generator stream as the initial point of
    ``run_envbo`` so both start from the same observation.
    """
    state, source = _start_campaign(
        domain,
        env_source,
        budget,
        METHOD_RANDOM,
        acq=acq,
        kernel_family=kernel_family,
        seed=seed,
        mle_restarts=mle_restarts,
    )
    LOGGER.info("Random campaign: budget %d, seed %d", budget, seed)
    rng = util.make_rng(seed)
    while state.remaining > 0:
        _random_step(state, objective, _next_env(source, state), rng)
    return state


@util.positional(3)
def conditional_optimum(model, domain, env_values, constraints=None, seed=0,
                        n_samples=acqopt.DEFAULT_SAMPLES,
                        n_starts=acqopt.DEFAULT_STARTS):
    """Maximizes the posterior mean over controllable inputs at ``env_values``.

    Returns:
      (x_ctrl, predicted): controllable values of the predicted optimum and
      the posterior mean there.
    """

    def mean(X):
        return model.predict(X)[0]

    result = acqopt.maximize(
        mean,
        domain,
        env_values=env_values,
        constraints=constraints,
        seed=seed,
        n_samples=n_samples,
        n_starts=n_starts,
    )
    return domain.split(result.x)[0], result.value
