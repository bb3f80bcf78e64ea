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

"""Space-filling designs.

Latin hypercube designs on the unit cube, made maximin by keeping the best
of several random draws, and the affine map onto box bounds. Used for
initial designs, multi-start optimisation and test-point generation.
"""

__all__ = ["UnitDesign", "maximin_lhs", "scale_to_bounds", "random_lhs"]

import logging

import numpy as np
from scipy.spatial.distance import pdist

from envbo import _helpers as util
from envbo import errors

logger = logging.getLogger(__name__)

DEFAULT_CANDIDATES = 100


class UnitDesign(object):
    """A design on the unit cube.

    Attributes:
      points: numpy.ndarray, n x d matrix with entries in [0, 1].
      seed: the seed (or generator) the design was drawn with.
    """

    def __init__(self, points, seed=None):
        self.points = np.asarray(points, dtype=float)
        self.seed = seed

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def min_distance(self):
        """Smallest pairwise Euclidean distance (inf for a single point)."""
        return _min_distance(self.points)


def _min_distance(points):
    if points.shape[0] < 2:
        return np.inf
    return float(np.min(pdist(points)))


def random_lhs(n, d, rng):
    """One random Latin hypercube draw using ``rng``.

    Each column is a random permutation of the strata with a uniform
    position inside each stratum.
    """
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (strata + rng.random((n, d))) / n


@util.positional(2)
def maximin_lhs(n, d, seed=0, n_candidates=DEFAULT_CANDIDATES):
    """Draws a maximin Latin hypercube design on [0, 1]^d.

    ``n_candidates`` random Latin hypercubes are drawn from one generator
    and the one with the largest minimum pairwise distance is kept; ties go
    to the earliest draw. The first candidate is the plain single-draw
    design for the same seed.

    Args:
      n: int, number of points.
      d: int, dimension.
      seed: int or numpy.random.Generator.
      n_candidates: int, number of random draws to choose from.

    Returns:
      UnitDesign

    Raises:
      envbo.errors.InvalidArgumentError: if n, d or n_candidates is < 1.
    """
    if n < 1 or d < 1:
        raise errors.InvalidArgumentError(
            "Latin hypercube needs n >= 1 and d >= 1, got n=%d d=%d" % (n, d)
        )
    if n_candidates < 1:
        raise errors.InvalidArgumentError(
            "n_candidates must be >= 1, got %d" % n_candidates
        )
    rng = util.make_rng(seed)
    best = None
    best_distance = -np.inf
    for _ in range(n_candidates):
        candidate = random_lhs(n, d, rng)
        distance = _min_distance(candidate)
        if best is None or distance > best_distance:
            best = candidate
            best_distance = distance
    return UnitDesign(best, seed=seed)


def scale_to_bounds(design, lower, upper):
    """Maps unit-cube points column-wise onto [lower, upper].

    Args:
      design: UnitDesign or array of points in [0, 1].
      lower: sequence of lower bounds, one per column.
      upper: sequence of upper bounds, one per column.

    Returns:
      numpy.ndarray of scaled points.

    Raises:
      envbo.errors.InvalidArgumentError: inverted or degenerate bounds.
      envbo.errors.DimensionMismatchError: column count differs from bounds.
    """
    points = design.points if isinstance(design, UnitDesign) else design
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    lower = util.as_vector(lower, "lower")
    upper = util.as_vector(upper, "upper", length=lower.shape[0])
    if np.any(lower >= upper):
        raise errors.InvalidArgumentError(
            "Bounds must satisfy lower < upper, got %s and %s"
            % (lower.tolist(), upper.tolist())
        )
    if points.shape[1] != lower.shape[0]:
        raise errors.DimensionMismatchError(
            "Design has %d columns but %d bounds were given"
            % (points.shape[1], lower.shape[0])
        )
    return lower + points * (upper - lower)
