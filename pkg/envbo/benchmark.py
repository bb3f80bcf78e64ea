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

"""Replicated benchmark campaigns and their result tables.

Every replication draws one seed that all methods share, so each method
sees the same random walk and the same initial point. Rows of every table
carry the seed and the hash of the config that produced them; aggregated
rows carry the replication seeds they pool, separated by spaces.
"""

import concurrent.futures
import logging

import numpy as np
import pandas as pd
from scipy import stats

from envbo import _helpers as util
from envbo import acquisition
from envbo import config as config_lib
from envbo import envloop
from envbo import envsim
from envbo import testbed

logger = logging.getLogger(__name__)

CHECKPOINT_COLUMNS = [
    "label",
    "problem",
    "method",
    "replication",
    "seed",
    "evaluations",
    "mape",
    "config_hash",
]
FINAL_COLUMNS = [
    "label",
    "problem",
    "method",
    "replication",
    "seed",
    "final_mape",
    "domain_size",
    "degenerate",
    "best_y",
    "noise_sd",
    "step",
    "n_env",
    "beta",
    "config_hash",
]
SUMMARY_COLUMNS = [
    "label",
    "method",
    "evaluations",
    "n",
    "mean_mape",
    "ci_low",
    "ci_high",
    "seed",
    "config_hash",
]
COMPARISON_COLUMNS = [
    "label",
    "method",
    "mean_final_mape",
    "mean_difference",
    "p_value",
    "spearman_domain",
    "seed",
    "config_hash",
]
SWEEP_COLUMNS = [
    "problem",
    "column",
    "method",
    "settings",
    "spearman",
    "seed",
    "config_hash",
]
# Settings a preset may vary across its configs.
SWEPT_SETTINGS = ("step", "noise_sd", "n_env", "beta")

_ACQUISITIONS = {
    config_lib.ENVBO_EI: acquisition.EI,
    config_lib.ENVBO_LOGEI: acquisition.LOG_EI,
    config_lib.ENVBO_UCB: acquisition.UCB,
    # Only used for the final surrogate fit of the random method.
    config_lib.RANDOM: acquisition.EI,
}


def replication_seeds(config):
    return util.spawn_seeds(config.seed, config.replications)


def _walk(config, problem, seed):
    domain = problem.domain
    return envsim.init_walk(
        domain.env_lower,
        domain.env_upper,
        config.step_limits(problem),
        seed=seed,
        start=config.start,
        boundary=config.boundary,
    )


def run_method(config, method, seed):
    """One campaign of ``method`` for the replication seeded with ``seed``.

    Returns:
      (CampaignState, BenchmarkProblem)
    """
    problem = config.problem_instance()
    # Noise draws come from their own stream so the walk stays shared.
    noise_seed = int(
        np.random.SeedSequence([seed, 1]).generate_state(1, dtype=np.uint32)[0]
    )
    noisy = testbed.add_noise(problem, config.noise_sd, seed=noise_seed)
    acq = acquisition.AcquisitionSpec(_ACQUISITIONS[method], beta=config.beta)
    walk = _walk(config, problem, seed)
    if method == config_lib.RANDOM:
        state = envloop.run_random(
            noisy,
            problem.domain,
            walk,
            acq,
            config.budget,
            seed=seed,
            kernel_family=config.kernel,
            mle_restarts=config.mle_restarts,
        )
    else:
        state = envloop.run_envbo(
            noisy,
            problem.domain,
            walk,
            acq,
            config.budget,
            seed=seed,
            kernel_family=config.kernel,
            mle_restarts=config.mle_restarts,
            n_samples=config.n_samples,
            n_starts=config.n_starts,
        )
    return state, problem


def run_replication(config, replication, seed):
    """Runs and scores every method of ``config`` for one replication.

    Returns:
      (checkpoint_rows, final_rows): lists of dicts.
    """
    config_hash = config.config_hash()
    checkpoint_rows = []
    final_rows = []
    for method in config.methods:
        state, problem = run_method(config, method, seed)
        report = testbed.evaluate_campaign(
            state,
            problem,
            m=config.test_points,
            seed=seed,
            checkpoint_every=config.checkpoint_every,
            n_samples=config.n_samples,
            n_starts=config.n_starts,
        )
        base = {
            "label": config.label,
            "problem": config.problem,
            "method": method,
            "replication": replication,
            "seed": seed,
            "config_hash": config_hash,
        }
        for evaluations, score in report.checkpoints:
            row = dict(base, evaluations=evaluations, mape=score)
            checkpoint_rows.append(row)
        final_rows.append(
            dict(
                base,
                final_mape=report.final_mape,
                domain_size=report.domain_size,
                degenerate=report.degenerate,
                best_y=state.best()[1],
                noise_sd=config.noise_sd,
                step=float(config.step_limits(problem)[0]),
                n_env=config.n_env,
                beta=config.beta,
            )
        )
        logger.info(
            "%s replication %d %s: final MAPE %.4f",
            config.label or config.problem,
            replication,
            method,
            report.final_mape,
        )
    return checkpoint_rows, final_rows


def _run_one(args):
    return run_replication(*args)


class BenchmarkResults(object):
    """Tables of a benchmark run.

    Attributes:
      checkpoints: pandas.DataFrame, MAPE per checkpoint and replication.
      final: pandas.DataFrame, one row per method and replication.
      summary: pandas.DataFrame, mean MAPE and 95% t interval per checkpoint.
      comparison: pandas.DataFrame, each method against the random method.
      lengthscales: pandas.DataFrame or None, ARD fit output.
      sweeps: pandas.DataFrame or None, rank correlation of swept settings
        with final MAPE.
    """

    def __init__(self, checkpoints, final, summary, comparison, lengthscales=None,
                 sweeps=None):
        self.checkpoints = checkpoints
        self.final = final
        self.summary = summary
        self.comparison = comparison
        self.lengthscales = lengthscales
        self.sweeps = sweeps


@util.positional(1)
def run_benchmark(configs, jobs=1):
    """Runs every config in ``configs`` and collects the result tables.

    Replications are independent and run in ``jobs`` worker processes;
    rows are gathered in replication order so the output does not depend
    on ``jobs``.
    """
    tasks = []
    for config in configs:
        for replication, seed in enumerate(replication_seeds(config)):
            tasks.append((config, replication, seed))
    logger.info("Running %d replications with %d jobs", len(tasks), jobs)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_one, tasks))
    else:
        results = [_run_one(task) for task in tasks]

    checkpoint_rows = [row for rows, _ in results for row in rows]
    final_rows = [row for _, rows in results for row in rows]
    checkpoints = pd.DataFrame(checkpoint_rows, columns=CHECKPOINT_COLUMNS)
    final = pd.DataFrame(final_rows, columns=FINAL_COLUMNS)

    lengthscales = None
    studies = [c for c in configs if c.ard_points]
    if studies:
        lengthscales = variability_table(studies[0])
    return BenchmarkResults(
        checkpoints,
        final,
        summarize(checkpoints),
        compare_with_random(final),
        lengthscales=lengthscales,
        sweeps=sweep_table(final),
    )


def t_interval(values, confidence=0.95):
    """(mean, low, high) Student-t interval; NaN bounds for one value."""
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, float("nan"), float("nan")
    half = float(
        stats.t.ppf(0.5 + confidence / 2.0, values.size - 1)
        * stats.sem(values)
    )
    return mean, mean - half, mean + half


def _seeds(group):
    """Replication seeds pooled by ``group``, in order of appearance."""
    return " ".join(str(int(s)) for s in pd.unique(group["seed"]))


def summarize(checkpoints):
    """Mean MAPE and its 95% interval per config, method and checkpoint."""
    rows = []
    keys = ["label", "config_hash", "method", "evaluations"]
    for key, group in checkpoints.groupby(keys, sort=False):
        mean, low, high = t_interval(group["mape"].to_numpy())
        rows.append(dict(zip(keys, key), n=len(group), mean_mape=mean,
                         ci_low=low, ci_high=high, seed=_seeds(group)))
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def _spearman(x, y):
    if len(x) < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(stats.spearmanr(x, y)[0])


def compare_with_random(final):
    """Final-MAPE comparison of every method with the random method.

    Per config and method: mean final MAPE, the mean of the per-replication
    difference random minus method, the Mann-Whitney p-value against random
    and the Spearman correlation of effective-domain size with final MAPE.
    """
    rows = []
    keys = ["label", "config_hash"]
    for key, by_config in final.groupby(keys, sort=False):
        random = by_config[by_config["method"] == config_lib.RANDOM].set_index(
            "replication"
        )["final_mape"]
        for method, group in by_config.groupby("method", sort=False):
            scores = group.set_index("replication")["final_mape"]
            row = dict(
                zip(keys, key),
                method=method,
                mean_final_mape=float(scores.mean()),
                mean_difference=float("nan"),
                p_value=float("nan"),
                spearman_domain=_spearman(
                    group["domain_size"].to_numpy(), group["final_mape"].to_numpy()
                ),
                seed=_seeds(group),
            )
            if method != config_lib.RANDOM and len(random):
                shared = scores.index.intersection(random.index)
                row["mean_difference"] = float(
                    (random[shared] - scores[shared]).mean()
                )
                row["p_value"] = testbed.mann_whitney_u(
                    scores.to_numpy(), random.to_numpy()
                ).p
            rows.append(row)
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def sweep_spearman(final, column, method=config_lib.ENVBO_EI):
    """Rank correlation between a swept setting and mean final MAPE."""
    rows = final[final["method"] == method]
    means = rows.groupby(column)["final_mape"].mean()
    return _spearman(means.index.to_numpy(dtype=float), means.to_numpy())


def sweep_table(final):
    """``sweep_spearman`` for every setting that varies within a problem.

    One row per problem, swept setting and method. ``config_hash`` lists the
    hashes of the pooled configs, separated by spaces.
    """
    rows = []
    for problem, by_problem in final.groupby("problem", sort=False):
        for column in SWEPT_SETTINGS:
            if by_problem[column].nunique() < 2:
                continue
            for method, group in by_problem.groupby("method", sort=False):
                rows.append(
                    {
                        "problem": problem,
                        "column": column,
                        "method": method,
                        "settings": int(group[column].nunique()),
                        "spearman": sweep_spearman(group, column, method=method),
                        "seed": _seeds(group),
                        "config_hash": " ".join(pd.unique(group["config_hash"])),
                    }
                )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def variability_table(config):
    problem = config.problem_instance()
    fit = testbed.ard_variability_fit(
        problem, n_points=config.ard_points, seed=config.seed
    )
    return pd.DataFrame(
        {
            "input": ["x%d" % (i + 1) for i in range(len(fit.lengthscales))],
            "lengthscale": fit.lengthscales,
            "fallback": fit.fallback,
            "seed": config.seed,
            "config_hash": config.config_hash(),
        }
    )
