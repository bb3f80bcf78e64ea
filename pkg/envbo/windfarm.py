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

"""Desk-scale wind-farm simulator and layout experiments.

The simulator computes the annual energy production (AEP) of four 2 MW
turbines (80 m rotors) on a square site:

  * a fixed analytic terrain field speeds the ambient wind up or down by a
    factor in [0.5, 1.5) that depends on position and wind direction;
  * every turbine casts a top-hat Jensen wake (expansion k = 0.05) whose
    deficits combine by root-sum-square;
  * the effective speed at each turbine goes through a tabulated V80 power
    curve, and the farm power times 8766 hours gives the AEP in GWh.

Wind directions are meteorological: the direction the wind blows from, in
degrees clockwise from north (+y). A 90 degree wind comes from the east
and flows towards -x.

The layout problem has eight controllable coordinates (X, Y per turbine)
and the wind direction in [90, 135] as environmental input. Turbines must
be at least 160 m apart.
"""

__all__ = [
    "TurbineSpec",
    "Site",
    "FarmLayout",
    "V80",
    "local_speed",
    "wake_deficit",
    "turbine_speeds",
    "aep",
    "spacing_constraints",
    "is_feasible",
    "layout_domain",
    "random_feasible_layouts",
    "direct_search",
    "run_windfarm_experiment",
]

import collections
import itertools
import logging
import math

import numpy as np
import pandas as pd
from scipy import optimize

from envbo import _helpers as util
from envbo import acqopt
from envbo import acquisition
from envbo import envloop
from envbo import envsim
from envbo import errors

logger = logging.getLogger(__name__)

N_TURBINES = 4
SITE_SIZE = 1200.0
AMBIENT_SPEED = 6.0
MIN_SPACING = 160.0
HOURS_PER_YEAR = 8766.0
WAKE_EXPANSION = 0.05
DIRECTION_BOUNDS = (90.0, 135.0)
BO_DIRECTIONS = (90.0, 105.0, 120.0, 135.0)

ENVBO = "envbo"
BO = "bo"
DIRECT_SEARCH = "direct-search"
RANDOM = "random"
METHODS = (ENVBO, BO, DIRECT_SEARCH, RANDOM)

# V80 power (kW) and thrust coefficient by hub-height wind speed (m/s).
_POWER_SPEEDS = np.arange(4.0, 26.0)
_POWER_KW = np.array(
    [66.3, 152.0, 280.0, 457.0, 690.0, 978.0, 1296.0, 1598.0, 1818.0, 1935.0,
     1980.0, 1995.0] + [2000.0] * 10
)
_CT_SPEEDS = np.arange(4.0, 18.0)
_CT = np.array(
    [0.818, 0.806, 0.804, 0.805, 0.806, 0.807, 0.793, 0.739, 0.709, 0.409,
     0.314, 0.249, 0.202, 0.167]
)


class TurbineSpec(object):
    """Power and thrust characteristics of a turbine.

    Attributes:
      rated_power: float, kW.
      rotor_diameter: float, m.
      cut_in, rated_speed, cut_out: float, m/s.
    """

    def __init__(self, rated_power, rotor_diameter, cut_in, rated_speed, cut_out,
                 power_speeds, power_kw, ct_speeds, ct):
        self.rated_power = float(rated_power)
        self.rotor_diameter = float(rotor_diameter)
        self.cut_in = float(cut_in)
        self.rated_speed = float(rated_speed)
        self.cut_out = float(cut_out)
        self._power_speeds = power_speeds
        self._power_kw = power_kw
        self._ct_speeds = ct_speeds
        self._ct = ct

    def power(self, speed):
        """Electrical power in kW; zero outside [cut_in, cut_out]."""
        speed = np.asarray(speed, dtype=float)
        value = np.interp(speed, self._power_speeds, self._power_kw)
        operating = (speed >= self.cut_in) & (speed <= self.cut_out)
        return np.where(operating, np.minimum(value, self.rated_power), 0.0)

    def thrust_coefficient(self, speed):
        speed = np.asarray(speed, dtype=float)
        value = np.interp(speed, self._ct_speeds, self._ct)
        operating = (speed >= self.cut_in) & (speed <= self.cut_out)
        return np.where(operating, value, 0.0)

    def induction(self, speed):
        """Axial induction a = (1 - sqrt(1 - Ct)) / 2."""
        ct = np.clip(self.thrust_coefficient(speed), 0.0, 1.0)
        return 0.5 * (1.0 - np.sqrt(1.0 - ct))


V80 = TurbineSpec(2000.0, 80.0, 4.0, 15.0, 25.0, _POWER_SPEEDS, _POWER_KW,
                  _CT_SPEEDS, _CT)

Ridge = collections.namedtuple(
    "Ridge", ["x", "y", "height", "length", "width", "angle_offset"]
)

DEFAULT_RIDGES = (
    Ridge(400.0, 750.0, 1.2, 450.0, 120.0, 0.0),
    Ridge(850.0, 350.0, 0.8, 350.0, 150.0, 40.0),
)


class Site(object):
    """Square site with a direction dependent terrain speed-up field.

    The speed-up is 0.5 + (1 - exp(-(G1 + G2))) where each G is an
    anisotropic Gaussian ridge whose long axis turns with the wind
    direction. A flat site has speed-up 1 everywhere.
    """

    def __init__(self, size=SITE_SIZE, ridges=DEFAULT_RIDGES, flat=False):
        self.lower = np.zeros(2)
        self.upper = np.full(2, float(size))
        self.ridges = tuple(ridges)
        self.flat = flat

    @classmethod
    def flat_site(cls, size=SITE_SIZE):
        return cls(size=size, ridges=(), flat=True)

    def contains(self, points, tol=1e-9):
        points = np.atleast_2d(points)
        return bool(
            np.all(points >= self.lower - tol) and np.all(points <= self.upper + tol)
        )

    def speed_up(self, x, y, direction):
        """Speed-up factor at (x, y) for ``direction`` degrees."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.flat:
            return np.ones(np.broadcast(x, y).shape)
        total = np.zeros(np.broadcast(x, y).shape)
        for ridge in self.ridges:
            angle = math.radians(direction + ridge.angle_offset)
            dx = x - ridge.x
            dy = y - ridge.y
            along = dx * math.cos(angle) + dy * math.sin(angle)
            across = -dx * math.sin(angle) + dy * math.cos(angle)
            total += ridge.height * np.exp(
                -0.5 * (along / ridge.length) ** 2 - 0.5 * (across / ridge.width) ** 2
            )
        return 0.5 + (1.0 - np.exp(-total))

    def lipschitz_bound(self):
        """Upper bound on the spatial gradient norm of the speed-up field."""
        if self.flat:
            return 0.0
        return sum(
            r.height / math.sqrt(math.e) * math.hypot(1.0 / r.length, 1.0 / r.width)
            for r in self.ridges
        )


DEFAULT_SITE = Site()


class FarmLayout(object):
    """Turbine positions plus the wind state.

    Attributes:
      positions: numpy.ndarray, N x 2 coordinates in metres.
      direction: float, wind direction in degrees.
      wind_speed: float, ambient wind speed in m/s.
    """

    def __init__(self, positions, direction, wind_speed=AMBIENT_SPEED):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        self.direction = float(direction)
        self.wind_speed = float(wind_speed)

    @classmethod
    def from_vector(cls, x, wind_speed=AMBIENT_SPEED):
        """Layout from [X1, Y1, ..., XN, YN, direction]."""
        x = np.asarray(x, dtype=float)
        return cls(x[:-1], x[-1], wind_speed=wind_speed)

    def to_vector(self):
        return np.append(self.positions.reshape(-1), self.direction)

    def to_dict(self):
        return {
            "positions": self.positions.tolist(),
            "direction": self.direction,
            "wind_speed": self.wind_speed,
        }


def _flow_vector(direction):
    theta = math.radians(direction)
    return np.array([-math.sin(theta), -math.cos(theta)])


def local_speed(position, direction, ambient_speed=AMBIENT_SPEED, site=DEFAULT_SITE):
    """Free-stream speed at ``position`` including the terrain speed-up.

    Raises:
      envbo.errors.InvalidArgumentError: position outside the site.
    """
    position = util.as_vector(position, "position", length=2)
    if not site.contains(position):
        raise errors.InvalidArgumentError(
            "Position %s outside the site" % position.tolist()
        )
    return float(ambient_speed * site.speed_up(position[0], position[1], direction))


def wake_deficit(upstream, point, direction, thrust_coefficient,
                 rotor_diameter=V80.rotor_diameter, k=WAKE_EXPANSION):
    """Fractional speed deficit at ``point`` in the wake of ``upstream``.

    Top-hat Jensen model: 2a / (1 + 2 k x / D)^2 inside the cone of radius
    D/2 + k x at downstream distance x, zero elsewhere.
    """
    delta = np.asarray(point, dtype=float) - np.asarray(upstream, dtype=float)
    flow = _flow_vector(direction)
    downstream = float(delta @ flow)
    if downstream <= 0:
        return 0.0
    radial = float(np.linalg.norm(delta - downstream * flow))
    if radial > rotor_diameter / 2.0 + k * downstream:
        return 0.0
    ct = min(max(float(thrust_coefficient), 0.0), 1.0)
    a = 0.5 * (1.0 - math.sqrt(1.0 - ct))
    return 2.0 * a / (1.0 + 2.0 * k * downstream / rotor_diameter) ** 2


def turbine_speeds(layout, site=DEFAULT_SITE, turbine=V80, k=WAKE_EXPANSION):
    """Effective wind speed at every turbine of ``layout``.

    Turbines are visited from upwind to downwind so each wake uses the
    thrust of its turbine at that turbine's own waked speed.
    """
    positions = layout.positions
    free = layout.wind_speed * site.speed_up(
        positions[:, 0], positions[:, 1], layout.direction
    )
    flow = _flow_vector(layout.direction)
    order = np.argsort(positions @ flow, kind="stable")
    speeds = np.array(free, dtype=float)
    for rank, i in enumerate(order):
        squared = 0.0
        for j in order[:rank]:
            ct = float(turbine.thrust_coefficient(speeds[j]))
            squared += (
                wake_deficit(
                    positions[j],
                    positions[i],
                    layout.direction,
                    ct,
                    rotor_diameter=turbine.rotor_diameter,
                    k=k,
                )
                ** 2
            )
        deficit = min(math.sqrt(squared), 1.0)
        speeds[i] = free[i] * (1.0 - deficit)
    return speeds


def aep(layout, site=DEFAULT_SITE, turbine=V80):
    """Annual energy production of ``layout`` in GWh."""
    speeds = turbine_speeds(layout, site=site, turbine=turbine)
    return float(np.sum(turbine.power(speeds))) * HOURS_PER_YEAR / 1e6


def spacing_constraints(positions):
    """Pairwise distance minus the minimum spacing, one value per pair."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    return np.array(
        [
            np.linalg.norm(positions[i] - positions[j]) - MIN_SPACING
            for i, j in itertools.combinations(range(positions.shape[0]), 2)
        ]
    )


def is_feasible(layout, tol=1e-6):
    return bool(np.all(spacing_constraints(layout.positions) >= -tol))


def layout_domain(n_turbines=N_TURBINES, size=SITE_SIZE,
                  direction_bounds=DIRECTION_BOUNDS):
    """The nine-dimensional search domain; the direction is environmental."""
    d = 2 * n_turbines
    lower = np.append(np.zeros(d), direction_bounds[0])
    upper = np.append(np.full(d, float(size)), direction_bounds[1])
    return acqopt.Domain(lower, upper, env_indices=(d,))


def _spacing_set(n_coordinates):
    return acqopt.ConstraintSet(
        [acqopt.Constraint("spacing", lambda x: spacing_constraints(x[:n_coordinates]))]
    )


def random_feasible_layouts(n, rng, n_turbines=N_TURBINES, size=SITE_SIZE,
                            max_tries=100000):
    """``n`` uniformly placed layouts that satisfy the spacing constraint."""
    layouts = []
    for _ in range(max_tries):
        positions = rng.random((n_turbines, 2)) * size
        if np.all(spacing_constraints(positions) >= 0):
            layouts.append(positions)
            if len(layouts) == n:
                return layouts
    raise errors.Error("Could not place %d feasible random layouts" % n)


DirectResult = collections.namedtuple(
    "DirectResult", ["positions", "aep", "evaluations", "feasible"]
)


@util.positional(1)
def direct_search(direction, seed=0, n_starts=2, max_iter=100,
                  ambient_speed=AMBIENT_SPEED, site=DEFAULT_SITE):
    """SLSQP on the simulator itself at a fixed wind direction.

    Every simulator call, including those for finite-difference gradients,
    is counted.

    Returns:
      DirectResult(positions, aep, evaluations, feasible)
    """
    rng = util.make_rng(seed)
    calls = [0]
    size = float(site.upper[0])

    def negative_aep(coordinates):
        calls[0] += 1
        coordinates = np.clip(coordinates, 0.0, size)
        return -aep(FarmLayout(coordinates, direction, ambient_speed), site=site)

    best = None
    for start in random_feasible_layouts(n_starts, rng, size=size):
        result = optimize.minimize(
            negative_aep,
            start.reshape(-1),
            method="SLSQP",
            bounds=[(0.0, size)] * start.size,
            constraints=[{"type": "ineq", "fun": spacing_constraints}],
            options={"maxiter": max_iter},
        )
        positions = np.clip(result.x, 0.0, size).reshape(-1, 2)
        value = aep(FarmLayout(positions, direction, ambient_speed), site=site)
        feasible = bool(np.all(spacing_constraints(positions) >= -1e-6))
        key = (feasible, value)
        if best is None or key > (best.feasible, best.aep):
            best = DirectResult(positions, value, 0, feasible)
    logger.info(
        "Direct search at %.1f degrees: %.4f GWh after %d evaluations",
        direction,
        best.aep,
        calls[0],
    )
    return best._replace(evaluations=calls[0])


class WindfarmResults(object):
    """Tables produced by ``run_windfarm_experiment``.

    Attributes:
      summary: pandas.DataFrame with columns method, direction, aep,
        evaluations, feasible.
      envbo_grid: pandas.DataFrame, ENVBO's predicted layouts on the
        direction grid with predicted and simulated AEP.
      direction_bins: pandas.DataFrame, ENVBO evaluations per direction bin.
      improvements: pandas.DataFrame, relative AEP gain of ENVBO over each
        baseline per comparison direction.
      layouts: list of dict, one JSON-friendly layout per ENVBO solution.
    """

    def __init__(self, summary, envbo_grid, direction_bins, improvements, layouts):
        self.summary = summary
        self.envbo_grid = envbo_grid
        self.direction_bins = direction_bins
        self.improvements = improvements
        self.layouts = layouts


def _envbo(config, domain, constraints, seed):
    walk = envsim.init_walk(
        [config.direction_bounds[0]],
        [config.direction_bounds[1]],
        [config.step],
        seed=seed,
    )

    def objective(x):
        return aep(FarmLayout.from_vector(x, wind_speed=config.ambient_speed))

    state = envloop.run_envbo(
        objective,
        domain,
        walk,
        acquisition.AcquisitionSpec(acquisition.EI),
        config.budget,
        seed=seed,
        constraints=constraints,
        mle_restarts=config.mle_restarts,
        n_samples=config.n_samples,
        n_starts=config.n_starts,
    )
    model = envloop.fit_model(state)
    rows = []
    layouts = []
    for direction in np.linspace(
        config.direction_bounds[0], config.direction_bounds[1], config.grid_size
    ):
        ctrl, predicted = envloop.conditional_optimum(
            model,
            domain,
            [direction],
            constraints=constraints,
            seed=seed,
            n_samples=config.n_samples,
            n_starts=config.n_starts,
        )
        layout = FarmLayout(ctrl, direction, config.ambient_speed)
        rows.append(
            {
                "direction": float(direction),
                "predicted_aep": float(predicted),
                "simulated_aep": aep(layout),
                "feasible": is_feasible(layout),
            }
        )
        layouts.append(layout.to_dict())
    directions = np.array([record.env[0] for record in state.trace])
    return state, pd.DataFrame(rows), layouts, directions


def _nearest_row(grid, direction):
    index = int(np.argmin(np.abs(grid["direction"].to_numpy() - direction)))
    return grid.iloc[index]


def _bo(config, direction, constraints, seed):
    d = 2 * N_TURBINES
    domain = acqopt.Domain(np.zeros(d), np.full(d, SITE_SIZE))

    def objective(x):
        return aep(FarmLayout(x, direction, config.ambient_speed))

    per_direction = config.budget // len(config.bo_directions)
    state = envloop.run_bo(
        objective,
        domain,
        acquisition.AcquisitionSpec(acquisition.EI),
        per_direction,
        seed=seed,
        constraints=constraints,
        mle_restarts=config.mle_restarts,
        n_samples=config.n_samples,
        n_starts=config.n_starts,
    )
    feasible = [
        i
        for i, x in enumerate(state.dataset.inputs)
        if np.all(spacing_constraints(x) >= -1e-6)
    ]
    outputs = state.dataset.outputs
    if feasible:
        best = max(feasible, key=lambda i: (outputs[i], -i))
    else:
        logger.warning("BO at %.1f degrees found no feasible layout", direction)
        best = int(np.argmax(outputs))
    return float(outputs[best]), state.evaluations_used, bool(feasible)


def _bins(directions, bounds, width):
    edges = np.arange(bounds[0], bounds[1] + width, width)
    edges[-1] = max(edges[-1], bounds[1])
    counts, edges = np.histogram(directions, bins=edges)
    return pd.DataFrame(
        {"bin_lower": edges[:-1], "bin_upper": edges[1:], "evaluations": counts}
    )


def run_windfarm_experiment(config):
    """Compares ENVBO with fixed-direction BO, direct search and random layouts.

    Args:
      config: config.WindfarmConfig.

    Returns:
      WindfarmResults
    """
    methods = set(config.methods)
    unknown = methods - set(METHODS)
    if unknown:
        raise errors.InvalidArgumentError(
            "Unknown wind-farm methods %s" % sorted(unknown)
        )
    seeds = util.spawn_seeds(config.seed, 3 + len(config.bo_directions))
    domain = layout_domain(direction_bounds=config.direction_bounds)
    constraints = _spacing_set(2 * N_TURBINES)
    summary = []
    envbo_grid = pd.DataFrame(
        columns=["direction", "predicted_aep", "simulated_aep", "feasible"]
    )
    bins = pd.DataFrame(columns=["bin_lower", "bin_upper", "evaluations"])
    layouts = []

    if ENVBO in methods:
        logger.info("Running ENVBO with %d evaluations", config.budget)
        state, envbo_grid, layouts, directions = _envbo(
            config, domain, constraints, seeds[0]
        )
        bins = _bins(directions, config.direction_bounds, config.bin_width)
        for direction in config.bo_directions:
            row = _nearest_row(envbo_grid, direction)
            summary.append(
                {
                    "method": ENVBO,
                    "direction": float(direction),
                    "aep": float(row["simulated_aep"]),
                    "evaluations": state.evaluations_used,
                    "feasible": bool(row["feasible"]),
                }
            )

    rng = util.make_rng(seeds[1])
    for index, direction in enumerate(config.bo_directions):
        if BO in methods:
            value, used, feasible = _bo(
                config, direction, constraints, seeds[3 + index]
            )
            summary.append(
                {
                    "method": BO,
                    "direction": float(direction),
                    "aep": value,
                    "evaluations": used,
                    "feasible": feasible,
                }
            )
        if DIRECT_SEARCH in methods:
            result = direct_search(
                direction,
                seed=seeds[2] + index,
                n_starts=config.direct_starts,
                max_iter=config.direct_max_iter,
                ambient_speed=config.ambient_speed,
            )
            summary.append(
                {
                    "method": DIRECT_SEARCH,
                    "direction": float(direction),
                    "aep": result.aep,
                    "evaluations": result.evaluations,
                    "feasible": result.feasible,
                }
            )
        if RANDOM in methods:
            values = [
                aep(FarmLayout(p, direction, config.ambient_speed))
                for p in random_feasible_layouts(config.random_layouts, rng)
            ]
            summary.append(
                {
                    "method": RANDOM,
                    "direction": float(direction),
                    "aep": float(np.mean(values)),
                    "evaluations": len(values),
                    "feasible": True,
                }
            )

    summary = pd.DataFrame(
        summary, columns=["method", "direction", "aep", "evaluations", "feasible"]
    )
    return WindfarmResults(
        summary, envbo_grid, bins, _improvements(summary), layouts
    )


def _improvements(summary):
    rows = []
    envbo = summary[summary["method"] == ENVBO].set_index("direction")["aep"]
    for method in (BO, DIRECT_SEARCH, RANDOM):
        baseline = summary[summary["method"] == method].set_index("direction")["aep"]
        for direction in envbo.index.intersection(baseline.index):
            reference = float(baseline[direction])
            rows.append(
                {
                    "baseline": method,
                    "direction": float(direction),
                    "relative_improvement": (
                        (float(envbo[direction]) - reference) / reference
                        if reference
                        else float("nan")
                    ),
                }
            )
    return pd.DataFrame(
        rows, columns=["baseline", "direction", "relative_improvement"]
    )
