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

"""Helper functions for commonly used utilities."""

import functools
import hashlib
import inspect
import json
import logging
import numbers

import numpy as np

from envbo import errors


logger = logging.getLogger(__name__)

POSITIONAL_WARNING = "WARNING"
POSITIONAL_EXCEPTION = "EXCEPTION"
POSITIONAL_IGNORE = "IGNORE"
POSITIONAL_SET = frozenset(
    [POSITIONAL_WARNING, POSITIONAL_EXCEPTION, POSITIONAL_IGNORE]
)

positional_parameters_enforcement = POSITIONAL_WARNING


def positional(max_positional_args):
    """A decorator to declare that only the first N arguments may be positional.

    Numerical entry points in this package take many tuning knobs
    (seeds, restart counts, tolerances). Declaring them keyword-only keeps
    call sites readable and stops a seed from silently landing in the slot
    of a restart count::

        @positional(2)
        def fit_mle(data, kernel_family, seed=0, n_restarts=10):
            ...

        fit_mle(data, "matern52", seed=3)  # Ok.
        fit_mle(data, "matern52", 3)  # Raises or warns.

    If no default value is provided to a keyword argument, it becomes a
    required keyword argument. When decorating methods remember to account
    for ``self``.

    The behavior is controlled by
    ``_helpers.positional_parameters_enforcement``, which may be set to
    ``POSITIONAL_EXCEPTION``, ``POSITIONAL_WARNING`` or
    ``POSITIONAL_IGNORE`` to raise an exception, log a warning, or do
    nothing, respectively, if a declaration is violated.

    Args:
        max_positional_args: Maximum number of positional arguments. All
                             parameters after this index must be keyword
                             only. May also be the decorated function
                             itself, in which case every parameter with a
                             default becomes keyword only.

    Returns:
        A decorator that prevents using arguments after max_positional_args
        from being used as positional parameters.

    Raises:
        TypeError: if a keyword-only argument is provided as a positional
                   parameter, but only if
                   _helpers.positional_parameters_enforcement is set to
                   POSITIONAL_EXCEPTION.
    """

    def positional_decorator(wrapped):
        @functools.wraps(wrapped)
        def positional_wrapper(*args, **kwargs):
            if len(args) > max_positional_args:
                plural_s = ""
                if max_positional_args != 1:
                    plural_s = "s"
                message = (
                    "{function}() takes at most {args_max} positional "
                    "argument{plural} ({args_given} given)".format(
                        function=wrapped.__name__,
                        args_max=max_positional_args,
                        args_given=len(args),
                        plural=plural_s,
                    )
                )
                if positional_parameters_enforcement == POSITIONAL_EXCEPTION:
                    raise TypeError(message)
                elif positional_parameters_enforcement == POSITIONAL_WARNING:
                    logger.warning(message)
            return wrapped(*args, **kwargs)

        return positional_wrapper

    if isinstance(max_positional_args, numbers.Integral):
        return positional_decorator
    else:
        spec = inspect.getfullargspec(max_positional_args)
        n_defaults = len(spec.defaults or ())
        return positional(len(spec.args) - n_defaults)(max_positional_args)


def make_rng(seed):
    """Returns a numpy Generator for ``seed``.

    Args:
        seed: int, numpy.random.SeedSequence or numpy.random.Generator. A
            Generator is passed through untouched so callers can thread one
            stream through several operations.

    Returns:
        numpy.random.Generator
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, numbers.Integral) and not isinstance(seed, bool):
        if seed < 0:
            raise errors.InvalidArgumentError("seed must be non-negative: %d" % seed)
        return np.random.default_rng(int(seed))
    raise errors.InvalidArgumentError("Unsupported seed type: %r" % (seed,))


def spawn_seeds(seed, count):
    """Derives ``count`` independent integer seeds from ``seed``.

    The derivation goes through ``numpy.random.SeedSequence.spawn`` so child
    streams are statistically independent yet fully determined by ``seed``.
    """
    children = np.random.SeedSequence(int(seed)).spawn(int(count))
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def as_vector(values, name, length=None):
    """Coerces ``values`` to a finite 1-D float array.

    Raises:
        envbo.errors.InvalidArgumentError: non-finite entries.
        envbo.errors.DimensionMismatchError: wrong length.
    """
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise errors.DimensionMismatchError(
            "%s must be one-dimensional, got shape %s" % (name, arr.shape)
        )
    if length is not None and arr.shape[0] != length:
        raise errors.DimensionMismatchError(
            "%s must have length %d, got %d" % (name, length, arr.shape[0])
        )
    if not np.all(np.isfinite(arr)):
        raise errors.InvalidArgumentError("%s contains non-finite values" % name)
    return arr


def as_matrix(values, name, columns=None):
    """Coerces ``values`` to a finite 2-D float array (rows are points)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise errors.DimensionMismatchError(
            "%s must be two-dimensional, got shape %s" % (name, arr.shape)
        )
    if columns is not None and arr.shape[1] != columns:
        raise errors.DimensionMismatchError(
            "%s must have %d columns, got %d" % (name, columns, arr.shape[1])
        )
    if not np.all(np.isfinite(arr)):
        raise errors.InvalidArgumentError("%s contains non-finite values" % name)
    return arr


def canonical_json(value):
    """Serializes ``value`` deterministically (sorted keys, no whitespace)."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def config_hash(value):
    """Short, stable provenance hash of a JSON-serializable value."""
    digest = hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()
    return digest[:12]
