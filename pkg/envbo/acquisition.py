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

"""Acquisition criteria computed from a Gaussian process posterior.

Three families are supported: expected improvement (EI), its logarithm
computed in a numerically stable way (LogEI) and the upper confidence bound
(UCB). All criteria are to be maximized.
"""

__all__ = [
    "EI",
    "LOG_EI",
    "UCB",
    "AcquisitionSpec",
    "eval_ei",
    "eval_log_ei",
    "eval_ucb",
    "evaluate",
]

import math

import numpy as np
from scipy import special

from envbo import errors

EI = "ei"
LOG_EI = "logei"
UCB = "ucb"
FAMILIES = frozenset([EI, LOG_EI, UCB])

DEFAULT_BETA = 8.0

# Smallest predictive spread handed to LogEI by the optimizer.
SD_FLOOR = 1e-12

_C1 = 0.5 * math.log(2.0 * math.pi)
_C2 = 0.5 * math.log(math.pi / 2.0)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_LOG2 = math.log(2.0)


class AcquisitionSpec(object):
    """An acquisition family and its parameters.

    Attributes:
      family: str, one of EI, LOG_EI or UCB.
      y_best: float or None, incumbent observation for EI and LogEI.
      beta: float, exploration weight for UCB.
    """

    def __init__(self, family, y_best=None, beta=DEFAULT_BETA):
        if family not in FAMILIES:
            raise errors.InvalidArgumentError(
                "Unknown acquisition family %r, expected one of %s"
                % (family, sorted(FAMILIES))
            )
        if family == UCB and not beta > 0:
            raise errors.InvalidArgumentError("beta must be positive, got %r" % beta)
        if y_best is not None and not np.isfinite(y_best):
            raise errors.InvalidArgumentError("y_best must be finite")
        self.family = family
        self.y_best = None if y_best is None else float(y_best)
        self.beta = float(beta)

    def with_best(self, y_best):
        """Copy of this spec with a new incumbent value."""
        return AcquisitionSpec(self.family, y_best=y_best, beta=self.beta)

    @property
    def needs_best(self):
        return self.family in (EI, LOG_EI)

    def __eq__(self, other):
        return isinstance(other, AcquisitionSpec) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "AcquisitionSpec(%r, y_best=%r, beta=%r)" % (
            self.family,
            self.y_best,
            self.beta,
        )

    def to_dict(self):
        return {"family": self.family, "y_best": self.y_best, "beta": self.beta}

    @classmethod
    def from_dict(cls, body):
        return cls(
            body["family"],
            y_best=body.get("y_best"),
            beta=body.get("beta", DEFAULT_BETA),
        )


def _ei(mean, sd, y_best):
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    improvement = mean - y_best
    positive = sd > 0
    safe_sd = np.where(positive, sd, 1.0)
    z = improvement / safe_sd
    value = improvement * special.ndtr(z) + safe_sd * np.exp(-0.5 * z * z - _C1)
    value = np.where(positive, value, np.maximum(improvement, 0.0))
    return np.maximum(value, 0.0)


def _log1mexp(x):
    """log(1 - exp(x)) for x < 0."""
    x = np.asarray(x, dtype=float)
    near = x > -_LOG2
    out = np.empty_like(x)
    out[near] = np.log(-np.expm1(x[near]))
    out[~near] = np.log1p(-np.exp(x[~near]))
    return out


def _log_h(z):
    """log(phi(z) + z Phi(z)), stable for very negative z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    upper = z > -1.0
    zu = z[upper]
    out[upper] = np.log(np.exp(-0.5 * zu * zu - _C1) + zu * special.ndtr(zu))
    zl = z[~upper]
    if zl.size:
        log_tail = np.log(special.erfcx(-zl * _INV_SQRT2) * np.abs(zl)) + _C2
        out[~upper] = -0.5 * zl * zl - _C1 + _log1mexp(log_tail)
    return out


def _log_ei(mean, sd, y_best):
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(sd <= 0):
        raise errors.UndefinedAcquisitionError(
            "LogEI is undefined for a non-positive predictive standard deviation"
        )
    z = (mean - y_best) / sd
    return _log_h(z).reshape(np.shape(z)) + np.log(sd)


def _ucb(mean, sd, beta):
    if not beta > 0:
        raise errors.InvalidArgumentError("beta must be positive, got %r" % beta)
    return np.asarray(mean, dtype=float) + math.sqrt(beta) * np.asarray(sd, dtype=float)


def eval_ei(mean, sd, y_best):
    """Expected improvement over ``y_best``.

    (mean - y_best) Phi(z) + sd phi(z) with z = (mean - y_best) / sd, and
    max(mean - y_best, 0) when sd is 0. Rounding below zero is clamped.
    """
    if sd < 0:
        raise errors.InvalidArgumentError("sd must be non-negative, got %r" % sd)
    return float(_ei(mean, sd, y_best))


def eval_log_ei(mean, sd, y_best):
    """Logarithm of the expected improvement, finite far into the tail.

    Raises:
      envbo.errors.UndefinedAcquisitionError: sd is not positive.
    """
    return float(_log_ei(mean, sd, y_best))


def eval_ucb(mean, sd, beta=DEFAULT_BETA):
    """Upper confidence bound mean + sqrt(beta) sd."""
    return float(_ucb(mean, sd, beta))


def evaluate(spec, mean, sd):
    """Vectorized acquisition values for posterior ``mean`` and ``sd`` arrays."""
    if spec.family == UCB:
        return _ucb(mean, sd, spec.beta)
    if spec.y_best is None:
        raise errors.InvalidArgumentError(
            "Acquisition %r needs an incumbent y_best" % spec.family
        )
    if spec.family == EI:
        return _ei(mean, sd, spec.y_best)
    return _log_ei(mean, sd, spec.y_best)
