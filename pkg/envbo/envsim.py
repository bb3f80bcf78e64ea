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

"""Simulated environmental conditions.

Environmental variables follow a bounded random walk: every step adds an
independent uniform change in [-a_i, a_i] per variable. The change is drawn
as a fraction in [-1, 1] and scaled by the maximal step ``a_i``. Values that
leave the bounds are clipped (or reflected).
"""

__all__ = [
    "EnvWalk",
    "init_walk",
    "step",
    "measurements",
    "trajectory",
    "CLIP",
    "REFLECT",
]

import logging

import numpy as np

from envbo import _helpers as util
from envbo import errors

logger = logging.getLogger(__name__)

CLIP = "clip"
REFLECT = "reflect"
BOUNDARIES = frozenset([CLIP, REFLECT])

MIDPOINT = "midpoint"
UNIFORM_RANDOM = "uniform-random"


class EnvWalk(object):
    """A bounded uniform random walk.

    Attributes:
      lower, upper: numpy.ndarray, bounds per variable.
      step_limits: numpy.ndarray, maximal change a_i per step.
      state: numpy.ndarray, current values.
      seed: the seed the walk was created with.
      boundary: str, CLIP or REFLECT.
      steps: int, number of steps taken so far.
    """

    def __init__(self, lower, upper, step_limits, state, rng, seed=None,
                 boundary=CLIP):
        self.lower = lower
        self.upper = upper
        self.step_limits = step_limits
        self.state = state
        self._rng = rng
        self.seed = seed
        self.boundary = boundary
        self.steps = 0

    @property
    def dim(self):
        return self.lower.shape[0]

    def _bound(self, values):
        if self.boundary == REFLECT:
            values = np.where(values > self.upper, 2 * self.upper - values, values)
            values = np.where(values < self.lower, 2 * self.lower - values, values)
        return np.clip(values, self.lower, self.upper)

    def step(self):
        """Advances the walk one step and returns a copy of the new state."""
        fractions = self._rng.uniform(-1.0, 1.0, size=self.dim)
        self.state = self._bound(self.state + fractions * self.step_limits)
        self.steps += 1
        return self.state.copy()

    def to_dict(self):
        """Serializable snapshot, including the generator state."""
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "step_limits": self.step_limits.tolist(),
            "state": self.state.tolist(),
            "seed": self.seed if isinstance(self.seed, int) else None,
            "boundary": self.boundary,
            "steps": self.steps,
            "rng": self._rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, body):
        rng = np.random.default_rng()
        rng.bit_generator.state = body["rng"]
        walk = cls(
            np.asarray(body["lower"], dtype=float),
            np.asarray(body["upper"], dtype=float),
            np.asarray(body["step_limits"], dtype=float),
            np.asarray(body["state"], dtype=float),
            rng,
            seed=body.get("seed"),
            boundary=body.get("boundary", CLIP),
        )
        walk.steps = int(body.get("steps", 0))
        return walk


@util.positional(3)
def init_walk(lower, upper, step_limits, seed=0, start=MIDPOINT, boundary=CLIP):
    """Creates an EnvWalk.

    Args:
      lower, upper: sequences, bounds per variable.
      step_limits: sequence or scalar, maximal change per step (>= 0).
      seed: int or numpy.random.Generator.
      start: MIDPOINT, UNIFORM_RANDOM or an explicit vector inside the bounds.
      boundary: CLIP (default) or REFLECT.

    Returns:
      EnvWalk

    Raises:
      envbo.errors.InvalidArgumentError: bad bounds, negative step limits or
        an explicit start outside the bounds.
    """
    lower = util.as_vector(lower, "lower")
    upper = util.as_vector(upper, "upper", length=lower.shape[0])
    if np.any(lower >= upper):
        raise errors.InvalidArgumentError("Walk bounds must satisfy lower < upper")
    step_limits = np.broadcast_to(
        util.as_vector(step_limits, "step_limits"), lower.shape
    ).astype(float)
    if np.any(step_limits < 0):
        raise errors.InvalidArgumentError(
            "Step limits must be non-negative, got %s" % step_limits.tolist()
        )
    if boundary not in BOUNDARIES:
        raise errors.InvalidArgumentError("Unknown boundary policy %r" % boundary)
    rng = util.make_rng(seed)

    if isinstance(start, str):
        if start == MIDPOINT:
            state = 0.5 * (lower + upper)
        elif start == UNIFORM_RANDOM:
            state = lower + rng.random(lower.shape[0]) * (upper - lower)
        else:
            raise errors.InvalidArgumentError("Unknown start policy %r" % start)
    else:
        state = util.as_vector(start, "start", length=lower.shape[0])
        if np.any(state < lower) or np.any(state > upper):
            raise errors.InvalidArgumentError(
                "Walk start %s outside bounds" % state.tolist()
            )
        state = state.copy()
    state = np.clip(state, lower, upper)
    logger.debug("Environmental walk starts at %s", state.tolist())
    return EnvWalk(lower, upper, step_limits, state, rng, seed=seed, boundary=boundary)


def step(walk):
    """Advances ``walk`` one step; returns the new state."""
    return walk.step()


def measurements(env_source):
    """Iterates over environmental measurements from ``env_source``.

    An EnvWalk yields its current state first and then one new state per
    step. Any other source is iterated as a sequence of vectors, which lets
    recorded trajectories be replayed.
    """
    if isinstance(env_source, EnvWalk):
        yield env_source.state.copy()
        while True:
            yield env_source.step()
    else:
        for values in env_source:
            yield np.atleast_1d(np.asarray(values, dtype=float))


def trajectory(walk, n):
    """The first ``n`` measurements of ``walk`` as an n x k array."""
    source = measurements(walk)
    return np.vstack([next(source) for _ in range(n)])
