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

"""Conditional multi-start maximization over the controllable inputs.

The search space is a box ``Domain`` whose dimensions are split into
controllable and environmental ones. Environmental coordinates are pinned
to given values and only the controllable coordinates are optimized,
optionally subject to inequality constraints ``g(x) >= 0``.

The search first scores a maximin Latin hypercube over the (unit-scaled)
controllable subspace, then runs local ascents from the best points:
L-BFGS-B without constraints, SLSQP with them. Gradients come from central
differences. When SLSQP ends infeasible the ascent is repeated on an exact
L1 penalty whose weight doubles while the constraints stay violated.
"""

__all__ = [
    "Domain",
    "Constraint",
    "ConstraintSet",
    "OptimumResult",
    "maximize",
    "maximize_conditional",
    "acquisition_score",
]

import collections
import logging

import numpy as np
from scipy import optimize

from envbo import _helpers as util
from envbo import acquisition
from envbo import design
from envbo import errors

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 100
DEFAULT_STARTS = 20
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-8
FD_STEP = 1e-6
FEASIBILITY_TOL = 1e-6
PENALTY_SCALE = 1e3
MAX_PENALTY_DOUBLINGS = 8


class Domain(object):
    """Box bounds split into controllable and environmental dimensions.

    Attributes:
      lower, upper: numpy.ndarray, bounds per dimension.
      env_indices: tuple of int, environmental dimensions in order.
      ctrl_indices: tuple of int, the remaining (controllable) dimensions.
    """

    def __init__(self, lower, upper, env_indices=()):
        self.lower = util.as_vector(lower, "lower")
        self.upper = util.as_vector(upper, "upper", length=self.lower.shape[0])
        if np.any(self.lower >= self.upper):
            raise errors.InvalidArgumentError(
                "Domain bounds must satisfy lower < upper, got %s and %s"
                % (self.lower.tolist(), self.upper.tolist())
            )
        env_indices = tuple(int(i) for i in env_indices)
        if len(set(env_indices)) != len(env_indices):
            raise errors.InvalidArgumentError("env_indices contains duplicates")
        for i in env_indices:
            if not 0 <= i < self.dim:
                raise errors.InvalidArgumentError(
                    "Environmental index %d outside a %d-dimensional domain"
                    % (i, self.dim)
                )
        self.env_indices = env_indices
        self.ctrl_indices = tuple(i for i in range(self.dim) if i not in env_indices)

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def n_env(self):
        return len(self.env_indices)

    @property
    def n_ctrl(self):
        return len(self.ctrl_indices)

    @property
    def env_lower(self):
        return self.lower[list(self.env_indices)]

    @property
    def env_upper(self):
        return self.upper[list(self.env_indices)]

    @property
    def ctrl_lower(self):
        return self.lower[list(self.ctrl_indices)]

    @property
    def ctrl_upper(self):
        return self.upper[list(self.ctrl_indices)]

    def check_env(self, env_values):
        """Validates and returns ``env_values`` as a float vector."""
        env = util.as_vector(
            [] if env_values is None else env_values, "env_values", length=self.n_env
        )
        if np.any(env < self.env_lower) or np.any(env > self.env_upper):
            raise errors.InvalidArgumentError(
                "Environmental values %s outside bounds [%s, %s]"
                % (env.tolist(), self.env_lower.tolist(), self.env_upper.tolist())
            )
        return env

    def check_point(self, x):
        """Validates that ``x`` is a full in-bounds input vector."""
        x = util.as_vector(x, "x", length=self.dim)
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise errors.InvalidArgumentError(
                "Point %s outside the domain bounds" % x.tolist()
            )
        return x

    def embed(self, ctrl_values, env_values):
        """Builds full input rows from controllable and environmental parts.

        ``ctrl_values`` may be a vector or a matrix of rows. Environmental
        coordinates are copied without arithmetic.
        """
        ctrl = np.atleast_2d(np.asarray(ctrl_values, dtype=float))
        X = np.empty((ctrl.shape[0], self.dim))
        X[:, list(self.ctrl_indices)] = ctrl
        if self.n_env:
            X[:, list(self.env_indices)] = np.asarray(env_values, dtype=float)
        return X

    def split(self, x):
        """Returns (ctrl, env) parts of a full input vector."""
        x = np.asarray(x, dtype=float)
        return x[list(self.ctrl_indices)], x[list(self.env_indices)]

    def to_dict(self):
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "env_indices": list(self.env_indices),
        }

    @classmethod
    def from_dict(cls, body):
        return cls(body["lower"], body["upper"], body.get("env_indices", ()))

    def __eq__(self, other):
        return isinstance(other, Domain) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "Domain(%s)" % self.to_dict()


Constraint = collections.namedtuple("Constraint", ["name", "fn"])


class ConstraintSet(object):
    """Inequality constraints g_k(x) >= 0 on full input vectors.

    Each constraint function maps a full input vector to a scalar or to a
    vector of values that must all be non-negative.
    """

    def __init__(self, constraints=()):
        self.constraints = [
            c if isinstance(c, Constraint) else Constraint(*c) for c in constraints
        ]

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def values(self, x):
        if not self.constraints:
            return np.zeros(0)
        return np.concatenate(
            [np.atleast_1d(np.asarray(c.fn(x), dtype=float)) for c in self.constraints]
        )

    def violation(self, x):
        """Total amount by which the constraints are violated (L1)."""
        return float(np.sum(np.maximum(-self.values(x), 0.0)))

    def is_feasible(self, x, tol=FEASIBILITY_TOL):
        return bool(np.all(self.values(x) >= -tol))


OptimumResult = collections.namedtuple(
    "OptimumResult", ["x", "value", "feasible", "alternatives"]
)
OptimumResult.__doc__ = """Outcome of a conditional maximization.

Attributes:
  x: numpy.ndarray, the full input vector of the optimum.
  value: float, the score at ``x``.
  feasible: bool, False when no candidate satisfied the constraints.
  alternatives: list of full input vectors of the other feasible candidates,
    best first; used when an objective evaluation has to be retried.
"""


def acquisition_score(model, spec):
    """Vectorized acquisition score of ``model`` for use with ``maximize``."""

    def score(X):
        mean, variance = model.predict(X)
        sd = np.sqrt(np.maximum(variance, 0.0))
        if spec.family == acquisition.LOG_EI:
            sd = np.maximum(sd, acquisition.SD_FLOOR)
        return acquisition.evaluate(spec, mean, sd)

    return score


class _Problem(object):
    """Maps the unit controllable cube onto full inputs and scores them."""

    def __init__(self, score, domain, env):
        self.score = score
        self.domain = domain
        self.env = env
        self.lower = domain.ctrl_lower
        self.width = domain.ctrl_upper - domain.ctrl_lower
        self.n = domain.n_ctrl

    def to_full(self, U):
        U = np.clip(np.atleast_2d(U), 0.0, 1.0)
        ctrl = np.clip(self.lower + U * self.width, self.lower, self.lower + self.width)
        return self.domain.embed(ctrl, self.env)

    def values(self, U):
        return np.asarray(self.score(self.to_full(U)), dtype=float).reshape(-1)

    def value_and_gradient(self, u):
        """Score and its central-difference gradient at unit point ``u``."""
        upper = np.minimum(u + FD_STEP, 1.0)
        lower = np.maximum(u - FD_STEP, 0.0)
        points = [u]
        for i in range(self.n):
            up = u.copy()
            up[i] = upper[i]
            dn = u.copy()
            dn[i] = lower[i]
            points.extend([up, dn])
        values = self.values(np.vstack(points))
        grad = (values[1::2] - values[2::2]) / (upper - lower)
        return values[0], grad


def _local_ascent(problem, u0, constraints, max_iter, tol):
    """One bounded local ascent from ``u0``; returns the final unit point."""
    bounds = [(0.0, 1.0)] * problem.n

    def negative(u):
        value, grad = problem.value_and_gradient(u)
        if not np.isfinite(value):
            return 1e300, np.zeros_like(u)
        return -value, -grad

    if not len(constraints):
        result = optimize.minimize(
            negative,
            u0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter, "gtol": tol},
        )
        return np.clip(result.x, 0.0, 1.0)

    def constraint_values(u):
        return constraints.values(problem.to_full(u)[0])

    result = optimize.minimize(
        negative,
        u0,
        jac=True,
        method="SLSQP",
        bounds=bounds,
        constraints=[{"type": "ineq", "fun": constraint_values}],
        options={"maxiter": max_iter, "ftol": tol},
    )
    u = np.clip(result.x, 0.0, 1.0)
    if constraints.is_feasible(problem.to_full(u)[0]):
        return u
    return _penalty_ascent(problem, u0, constraints, max_iter, tol)


def _penalty_ascent(problem, u0, constraints, max_iter, tol):
    """Exact L1 penalty ascent with a doubling penalty weight."""
    weight = PENALTY_SCALE * max(abs(float(problem.values(u0)[0])), 1.0)
    u = u0
    for attempt in range(MAX_PENALTY_DOUBLINGS + 1):

        def negative(v, weight=weight):
            full = problem.to_full(v)[0]
            return -float(problem.values(v)[0]) + weight * constraints.violation(full)

        result = optimize.minimize(
            negative,
            u,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * problem.n,
            options={"maxiter": max_iter, "gtol": tol, "eps": FD_STEP},
        )
        u = np.clip(result.x, 0.0, 1.0)
        if constraints.is_feasible(problem.to_full(u)[0]):
            break
        logger.debug("Penalty ascent %d still infeasible, doubling weight", attempt)
        weight *= 2.0
    return u


@util.positional(2)
def maximize(score, domain, env_values=None, constraints=None, seed=0,
             n_samples=DEFAULT_SAMPLES, n_starts=DEFAULT_STARTS,
             max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL):
    """Maximizes ``score`` over the controllable inputs of ``domain``.

    Args:
      score: callable mapping an n x d matrix of full inputs to n values.
      domain: Domain.
      env_values: vector of environmental values, one per env index.
      constraints: ConstraintSet or None.
      seed: int or numpy.random.Generator for the space-filling samples.
      n_samples: int, number of Latin hypercube samples scored.
      n_starts: int, number of best samples used as ascent starts.
      max_iter: int, iteration cap for each local ascent.
      tol: float, local ascent tolerance.

    Returns:
      OptimumResult. Among equal scores the lowest start index wins; the
      scored samples themselves are candidates too.
    """
    env = domain.check_env(env_values)
    constraints = constraints if constraints is not None else ConstraintSet()

    if domain.n_ctrl == 0:
        x = domain.embed(np.zeros(0), env)[0]
        value = float(np.asarray(score(x.reshape(1, -1))).reshape(-1)[0])
        return OptimumResult(x, value, constraints.is_feasible(x), [])

    problem = _Problem(score, domain, env)
    samples = design.maximin_lhs(n_samples, domain.n_ctrl, seed=seed).points
    sample_values = problem.values(samples)
    sample_values = np.where(np.isfinite(sample_values), sample_values, -np.inf)
    violations = np.array([constraints.violation(x) for x in problem.to_full(samples)])
    order = np.lexsort((-sample_values, violations > FEASIBILITY_TOL))
    starts = order[: min(n_starts, len(order))]

    candidates = []
    for index in starts:
        u = _local_ascent(problem, samples[index], constraints, max_iter, tol)
        candidates.append(u)
    candidates.extend(samples[order])

    best = None
    best_value = -np.inf
    feasible = []
    least = None
    least_key = None
    for u in candidates:
        x = problem.to_full(u)[0]
        value = float(problem.values(u)[0])
        if not np.isfinite(value):
            value = -np.inf
        if constraints.is_feasible(x):
            feasible.append((value, x))
            if best is None or value > best_value:
                best, best_value = x, value
            continue
        key = (constraints.violation(x), -value)
        if least is None or key < least_key:
            least, least_key = (x, value), key

    if best is None:
        logger.warning(
            "No feasible point found; returning the least infeasible one "
            "(violation %.3g)",
            least_key[0],
        )
        return OptimumResult(least[0], least[1], False, [])

    alternatives = []
    ranked = sorted(range(len(feasible)), key=lambda i: (-feasible[i][0], i))
    for i in ranked:
        x = feasible[i][1]
        seen = [best] + alternatives
        if not any(np.array_equal(x, other) for other in seen):
            alternatives.append(x)
        if len(alternatives) >= n_starts:
            break
    return OptimumResult(best, best_value, True, alternatives)


@util.positional(4)
def maximize_conditional(model, acq, domain, env_values, constraints=None, seed=0,
                         n_samples=DEFAULT_SAMPLES, n_starts=DEFAULT_STARTS,
                         max_iter=DEFAULT_MAX_ITER):
    """Maximizes an acquisition over the controllable inputs given ``env_values``.

    Args:
      model: fitted model exposing ``predict(X) -> (mean, variance)``.
      acq: acquisition.AcquisitionSpec.
      domain: Domain.
      env_values: vector, measured environmental values (may be empty).
      constraints: ConstraintSet or None.
      seed: int or numpy.random.Generator.

    Returns:
      OptimumResult whose ``x`` carries ``env_values`` unchanged.
    """
    result = maximize(
        acquisition_score(model, acq),
        domain,
        env_values=env_values,
        constraints=constraints,
        seed=seed,
        n_samples=n_samples,
        n_starts=n_starts,
        max_iter=max_iter,
    )
    logger.debug(
        "Conditional optimum at env %s: value %.6g%s",
        list(domain.split(result.x)[1]),
        result.value,
        "" if result.feasible else " (infeasible)",
    )
    return result
