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

"""Declarative configuration of benchmark and wind-farm runs.

Configs are JSON objects. Parsing is strict: unknown keys, wrong types and
values that do not fit the chosen problem raise ``ConfigError`` before any
evaluation happens. ``to_dict`` and ``from_dict`` are inverses.

A config file holds either one object or a list of objects; a list runs
every entry as a separate variant. The named presets in ``PRESETS`` encode
the published experiment settings.
"""

__all__ = [
    "CampaignConfig",
    "WindfarmConfig",
    "PRESETS",
    "get_preset",
    "load_configs",
    "output_dir",
]

import json
import numbers
import os

from envbo import _helpers as util
from envbo import acqopt
from envbo import errors
from envbo import envsim
from envbo import gp
from envbo import testbed
from envbo import windfarm

OUTPUT_DIR_ENV = "ENVBO_OUTPUT_DIR"

ENVBO_EI = "envbo-ei"
ENVBO_LOGEI = "envbo-logei"
ENVBO_UCB = "envbo-ucb"
RANDOM = "random"
BENCHMARK_METHODS = (ENVBO_EI, ENVBO_LOGEI, ENVBO_UCB, RANDOM)
# Methods that need a fully controllable objective; only the wind-farm
# experiment can freeze its environment.
WINDFARM_ONLY_METHODS = (windfarm.BO, windfarm.DIRECT_SEARCH)

_PROBLEM_DIMS = {testbed.LEVY: 2, testbed.HARTMANN: 6}


def output_dir(path=None):
    """``path``, else $ENVBO_OUTPUT_DIR, else the current directory."""
    return path or os.environ.get(OUTPUT_DIR_ENV) or os.getcwd()


def _is_int(value):
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _check(condition, message, *args):
    if not condition:
        raise errors.ConfigError(message % args)


def _int(name, minimum=None):
    def check(value):
        _check(_is_int(value), "%s must be an integer, got %r", name, value)
        if minimum is not None:
            _check(value >= minimum, "%s must be >= %d, got %d", name, minimum, value)
        return int(value)

    return check


def _float(name, minimum=None, strict=False):
    def check(value):
        _check(_is_number(value), "%s must be a number, got %r", name, value)
        if minimum is not None:
            ok = value > minimum if strict else value >= minimum
            _check(ok, "%s out of range: %r", name, value)
        return float(value)

    return check


def _string(name, choices=None):
    def check(value):
        _check(isinstance(value, str), "%s must be a string, got %r", name, value)
        if choices is not None:
            _check(value in choices, "%s must be one of %s, got %r",
                   name, sorted(choices), value)
        return value

    return check


def _optional(check):
    def optional(value):
        return None if value is None else check(value)

    return optional


def _list_of(name, item_check, allow_empty=False):
    def check(value):
        _check(isinstance(value, (list, tuple)), "%s must be a list, got %r",
               name, value)
        _check(allow_empty or len(value) > 0, "%s must not be empty", name)
        return [item_check(item) for item in value]

    return check


class _Config(object):
    """Base for configs declared as a table of (name, check, default)."""

    # Overridden by subclasses.
    _FIELDS = ()

    def __init__(self, **kwargs):
        known = set(name for name, _, _ in self._FIELDS)
        unknown = sorted(set(kwargs) - known)
        if unknown:
            raise errors.ConfigError(
                "Unknown %s keys: %s" % (type(self).__name__, ", ".join(unknown))
            )
        for name, check, default in self._FIELDS:
            value = kwargs.get(name, default)
            if isinstance(value, tuple):
                value = list(value)
            setattr(self, name, check(value))
        self._validate()

    def _validate(self):
        pass

    @classmethod
    def from_dict(cls, body):
        if not isinstance(body, dict):
            raise errors.ConfigError(
                "%s must be a JSON object, got %r" % (cls.__name__, body)
            )
        return cls(**body)

    def to_dict(self):
        return dict((name, getattr(self, name)) for name, _, _ in self._FIELDS)

    def replace(self, **kwargs):
        body = self.to_dict()
        body.update(kwargs)
        return type(self)(**body)

    def config_hash(self):
        return util.config_hash(self.to_dict())

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, util.canonical_json(self.to_dict()))


class CampaignConfig(_Config):
    """A synthetic benchmark: methods x replications on one problem.

    ``env_indices`` and ``step`` default to the problem's own settings;
    ``test_points`` defaults to 25 per environmental variable. A positive
    ``ard_points`` also runs the length-scale variability fit.
    """

    _FIELDS = (
        ("label", _string("label"), ""),
        ("problem", _string("problem", _PROBLEM_DIMS), testbed.LEVY),
        ("methods", _list_of("methods", _string("method")), list(BENCHMARK_METHODS)),
        ("budget", _int("budget", 1), 100),
        ("replications", _int("replications", 1), 30),
        ("noise_sd", _float("noise_sd", 0.0), 0.0),
        ("env_indices", _optional(_list_of("env_indices", _int("env index", 0))), None),
        ("step", _optional(_list_of("step", _float("step", 0.0))), None),
        ("start", _string("start", (envsim.MIDPOINT, envsim.UNIFORM_RANDOM)),
         envsim.UNIFORM_RANDOM),
        ("boundary", _string("boundary", envsim.BOUNDARIES), envsim.CLIP),
        ("beta", _float("beta", 0.0, strict=True), 8.0),
        ("kernel", _string("kernel", (gp.MATERN52, gp.RBF)), gp.MATERN52),
        ("seed", _int("seed", 0), 0),
        ("checkpoint_every", _int("checkpoint_every", 1), testbed.CHECKPOINT_EVERY),
        ("test_points", _optional(_int("test_points", 1)), None),
        ("mle_restarts", _int("mle_restarts", 1), gp.DEFAULT_RESTARTS),
        ("n_samples", _int("n_samples", 1), acqopt.DEFAULT_SAMPLES),
        ("n_starts", _int("n_starts", 1), acqopt.DEFAULT_STARTS),
        ("ard_points", _int("ard_points", 0), 0),
        ("output", _optional(_string("output")), None),
    )

    def _validate(self):
        for method in self.methods:
            if method in WINDFARM_ONLY_METHODS:
                raise errors.ConfigError(
                    "Method %r needs a controllable environment; it is only "
                    "available in the wind-farm experiment" % method
                )
            _check(method in BENCHMARK_METHODS, "Unknown method %r, expected one of %s",
                   method, list(BENCHMARK_METHODS))
        _check(len(set(self.methods)) == len(self.methods), "Duplicate methods")
        dim = _PROBLEM_DIMS[self.problem]
        if self.env_indices is not None:
            indices = self.env_indices
            _check(len(set(indices)) == len(indices), "Duplicate env_indices")
            _check(all(i < dim for i in indices),
                   "env_indices %s outside the %d inputs of %s", indices, dim,
                   self.problem)
            _check(0 < len(indices) < dim,
                   "%s needs between 1 and %d environmental inputs", self.problem,
                   dim - 1)
            _check(self.problem != testbed.LEVY or indices == [1],
                   "Levy has x2 as its only environmental input")
        if self.step is not None:
            _check(len(self.step) == self.n_env,
                   "step has %d entries for %d environmental inputs",
                   len(self.step), self.n_env)
        _check(self.ard_points == 0 or self.ard_points > dim,
               "ard_points must exceed the problem dimension")

    @property
    def n_env(self):
        return 1 if self.env_indices is None else len(self.env_indices)

    def problem_instance(self):
        """The BenchmarkProblem this config runs on, without noise."""
        indices = None if self.env_indices is None else tuple(self.env_indices)
        return testbed.get_problem(self.problem, env_indices=indices)

    def step_limits(self, problem):
        return problem.step_limits if self.step is None else self.step


class WindfarmConfig(_Config):
    """The wind-farm layout comparison."""

    _FIELDS = (
        ("label", _string("label"), ""),
        ("methods", _list_of("methods", _string("method", windfarm.METHODS)),
         list(windfarm.METHODS)),
        ("budget", _int("budget", 1), 200),
        ("bo_directions", _list_of("bo_directions", _float("direction")),
         list(windfarm.BO_DIRECTIONS)),
        ("direction_bounds", _list_of("direction_bounds", _float("direction")),
         list(windfarm.DIRECTION_BOUNDS)),
        ("step", _float("step", 0.0), 5.0),
        ("ambient_speed", _float("ambient_speed", 0.0, strict=True),
         windfarm.AMBIENT_SPEED),
        ("grid_size", _int("grid_size", 1), 51),
        ("bin_width", _float("bin_width", 0.0, strict=True), 5.0),
        ("random_layouts", _int("random_layouts", 1), 100),
        ("direct_starts", _int("direct_starts", 1), 2),
        ("direct_max_iter", _int("direct_max_iter", 1), 100),
        ("seed", _int("seed", 0), 0),
        ("mle_restarts", _int("mle_restarts", 1), gp.DEFAULT_RESTARTS),
        ("n_samples", _int("n_samples", 1), acqopt.DEFAULT_SAMPLES),
        ("n_starts", _int("n_starts", 1), acqopt.DEFAULT_STARTS),
        ("output", _optional(_string("output")), None),
    )

    def _validate(self):
        _check(len(self.direction_bounds) == 2
               and self.direction_bounds[0] < self.direction_bounds[1],
               "direction_bounds must be [low, high] with low < high")
        low, high = self.direction_bounds
        _check(all(low <= d <= high for d in self.bo_directions),
               "bo_directions must lie within %s", self.direction_bounds)
        _check(self.budget >= len(self.bo_directions),
               "budget %d cannot be split over %d BO directions",
               self.budget, len(self.bo_directions))


_FULL_STUDY = dict(budget=100, replications=30)

PRESETS = {
    "levy-full": [CampaignConfig(label="levy", problem=testbed.LEVY, **_FULL_STUDY)],
    "hartmann-full": [
        CampaignConfig(label="hartmann", problem=testbed.HARTMANN, **_FULL_STUDY)
    ],
    "levy-ucb-beta": [
        CampaignConfig(label="beta=%g" % beta, problem=testbed.LEVY,
                       methods=[ENVBO_UCB, RANDOM], beta=beta, **_FULL_STUDY)
        for beta in (4.0, 8.0, 16.0)
    ],
    "hartmann-ucb-beta": [
        CampaignConfig(label="beta=%g" % beta, problem=testbed.HARTMANN,
                       methods=[ENVBO_UCB, RANDOM], beta=beta, **_FULL_STUDY)
        for beta in (4.0, 8.0, 16.0)
    ],
    "hartmann-noise": [
        CampaignConfig(label="sigma=%g" % sigma, problem=testbed.HARTMANN,
                       methods=[ENVBO_EI], noise_sd=sigma, **_FULL_STUDY)
        for sigma in (0.0, 0.025, 0.05, 0.1)
    ],
    "hartmann-n-env": [
        CampaignConfig(label="n_env=%d" % n, problem=testbed.HARTMANN,
                       methods=[ENVBO_EI, RANDOM],
                       env_indices=list(testbed.HARTMANN_ENV_INDICES[n]),
                       **_FULL_STUDY)
        for n in (1, 2, 3)
    ],
    "hartmann-fluctuation": [
        CampaignConfig(label="step=%g" % a, problem=testbed.HARTMANN,
                       methods=[ENVBO_EI], step=[a], **_FULL_STUDY)
        for a in (0.01, 0.05, 0.1, 0.5, 1.0)
    ],
    "hartmann-variability": [
        CampaignConfig(label="env=x%d" % (index + 1), problem=testbed.HARTMANN,
                       methods=[ENVBO_EI], env_indices=[index],
                       ard_points=2000 if index == 0 else 0,
                       **_FULL_STUDY)
        for index in (0, 2, 5)
    ],
    "windfarm-full": [WindfarmConfig(label="windfarm")],
    "windfarm-smoke": [
        WindfarmConfig(label="windfarm-smoke", budget=20, grid_size=11,
                       random_layouts=10, direct_starts=1, direct_max_iter=20,
                       mle_restarts=2, n_samples=30, n_starts=5)
    ],
}


def get_preset(name):
    """The list of configs of preset ``name``."""
    if name not in PRESETS:
        raise errors.ConfigError(
            "Unknown preset %r, expected one of %s" % (name, sorted(PRESETS))
        )
    return list(PRESETS[name])


def parse_configs(body, kind):
    """Configs of class ``kind`` from a JSON object or list of objects."""
    entries = body if isinstance(body, list) else [body]
    if not entries:
        raise errors.ConfigError("Config file holds an empty list")
    return [kind.from_dict(entry) for entry in entries]


def load_configs(path, kind):
    """Reads and validates the config file at ``path``.

    Raises:
      envbo.errors.ConfigError: unreadable file, invalid JSON or invalid
        config.
    """
    try:
        with open(path) as f:
            body = json.load(f)
    except (IOError, OSError) as e:
        raise errors.ConfigError("Cannot read config %s: %s" % (path, e))
    except ValueError as e:
        raise errors.ConfigError("Config %s is not valid JSON: %s" % (path, e))
    return parse_configs(body, kind)
