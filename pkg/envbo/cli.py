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

"""Command line entry point.

  envbo benchmark --preset levy-full --jobs 4
  envbo asktell init --session s.json --problem levy --budget 20
  envbo asktell suggest --session s.json --env 0.5
  envbo asktell observe --session s.json --x 1.2 0.5 --y -3.1
  envbo asktell predict --session s.json --env 0.5
  envbo windfarm --preset windfarm-smoke

Exit codes: 0 on success, 1 for configuration, session or argument errors
(including asking for a prediction before any observation), 2 for
failures while running.
"""

from __future__ import print_function

__all__ = ["main"]

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from envbo import acqopt
from envbo import acquisition
from envbo import benchmark
from envbo import config as config_lib
from envbo import envloop
from envbo import errors
from envbo import gp
from envbo import session_cache
from envbo import testbed
from envbo import windfarm

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError instead of exiting."""

    def error(self, message):
        raise errors.ConfigError("%s: %s" % (self.prog, message))


def _add_config_source(parser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="JSON config file (object or list).")
    source.add_argument("--preset", choices=sorted(config_lib.PRESETS))
    parser.add_argument("--output", help="Output directory.")
    parser.add_argument("--budget", type=int, help="Override the budget.")


def _build_parser():
    parser = _ArgumentParser(
        prog="envbo",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    commands = parser.add_subparsers(dest="command")
    commands.required = True

    bench = commands.add_parser("benchmark", help="Replicated synthetic benchmarks.")
    _add_config_source(bench)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--replications", type=int, help="Override replications.")
    bench.set_defaults(handler=cmd_benchmark)

    farm = commands.add_parser("windfarm", help="Wind-farm layout comparison.")
    _add_config_source(farm)
    farm.set_defaults(handler=cmd_windfarm)

    asktell = commands.add_parser("asktell", help="Externally driven campaign.")
    steps = asktell.add_subparsers(dest="step")
    steps.required = True

    init = steps.add_parser("init")
    init.add_argument("--session", required=True)
    init.add_argument("--problem", choices=[testbed.LEVY, testbed.HARTMANN])
    init.add_argument("--lower", type=float, nargs="+")
    init.add_argument("--upper", type=float, nargs="+")
    init.add_argument("--env-indices", type=int, nargs="+")
    init.add_argument(
        "--acquisition",
        default=acquisition.EI,
        choices=sorted(acquisition.FAMILIES),
    )
    init.add_argument("--beta", type=float, default=acquisition.DEFAULT_BETA)
    init.add_argument("--budget", type=int, required=True)
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--kernel", default=gp.MATERN52, choices=[gp.MATERN52, gp.RBF])
    init.add_argument("--force", action="store_true", help="Replace a session.")

    suggest = steps.add_parser("suggest")
    suggest.add_argument("--session", required=True)
    suggest.add_argument("--env", type=float, nargs="+", required=True)

    observe = steps.add_parser("observe")
    observe.add_argument("--session", required=True)
    observe.add_argument("--x", type=float, nargs="+", required=True)
    result = observe.add_mutually_exclusive_group(required=True)
    result.add_argument("--y", help="Observed value.")
    result.add_argument("--failed", action="store_true", help="Record a failure.")

    predict = steps.add_parser("predict")
    predict.add_argument("--session", required=True)
    predict.add_argument("--env", type=float, nargs="+", required=True)

    status = steps.add_parser("status")
    status.add_argument("--session", required=True)
    asktell.set_defaults(handler=cmd_asktell)
    return parser


def _configs(flags, kind):
    if flags.preset:
        configs = config_lib.get_preset(flags.preset)
    else:
        configs = config_lib.load_configs(flags.config, kind)
    overrides = {}
    if flags.budget is not None:
        overrides["budget"] = flags.budget
    if getattr(flags, "replications", None) is not None:
        overrides["replications"] = flags.replications
    if overrides:
        configs = [c.replace(**overrides) for c in configs]
    return configs


def _output_dir(flags, configs):
    path = config_lib.output_dir(flags.output or configs[0].output)
    if not os.path.isdir(path):
        os.makedirs(path)
    return path


def _write_csv(frame, directory, name):
    path = os.path.join(directory, name)
    frame.to_csv(path, index=False, float_format="%.10g")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def _write_benchmark(results, directory):
    _write_csv(results.checkpoints, directory, "benchmark_checkpoints.csv")
    _write_csv(results.final, directory, "benchmark_final.csv")
    _write_csv(results.summary, directory, "benchmark_summary.csv")
    _write_csv(results.comparison, directory, "benchmark_comparison.csv")
    if results.lengthscales is not None:
        _write_csv(results.lengthscales, directory, "benchmark_lengthscales.csv")
    if results.sweeps is not None and len(results.sweeps):
        _write_csv(results.sweeps, directory, "benchmark_sweeps.csv")


def _merge(results):
    checkpoints = pd.concat([r.checkpoints for r in results], ignore_index=True)
    final = pd.concat([r.final for r in results], ignore_index=True)
    scales = [r.lengthscales for r in results if r.lengthscales is not None]
    return benchmark.BenchmarkResults(
        checkpoints,
        final,
        benchmark.summarize(checkpoints),
        benchmark.compare_with_random(final),
        lengthscales=scales[0] if scales else None,
        sweeps=benchmark.sweep_table(final),
    )


def cmd_benchmark(flags):
    """Runs benchmark configs one at a time, flushing tables after each."""
    configs = _configs(flags, config_lib.CampaignConfig)
    directory = _output_dir(flags, configs)
    if flags.jobs < 1:
        raise errors.ConfigError("--jobs must be >= 1")
    done = []
    for config in configs:
        done.append(benchmark.run_benchmark([config], jobs=flags.jobs))
        merged = _merge(done)
        _write_benchmark(merged, directory)
    for row in merged.comparison.itertuples(index=False):
        print(
            "%s %s mean_final_mape=%.4f p_vs_random=%s"
            % (row.label, row.method, row.mean_final_mape, row.p_value)
        )
    return EXIT_OK


def _stamp(frame, config):
    frame = frame.copy()
    frame["seed"] = config.seed
    frame["config_hash"] = config.config_hash()
    return frame


def cmd_windfarm(flags):
    configs = _configs(flags, config_lib.WindfarmConfig)
    directory = _output_dir(flags, configs)
    for config in configs:
        results = windfarm.run_windfarm_experiment(config)
        prefix = "windfarm_%s" % (config.label or "run")
        _write_csv(_stamp(results.summary, config), directory, prefix + "_summary.csv")
        _write_csv(_stamp(results.envbo_grid, config), directory, prefix + "_grid.csv")
        _write_csv(_stamp(results.direction_bins, config), directory,
                   prefix + "_bins.csv")
        _write_csv(_stamp(results.improvements, config), directory,
                   prefix + "_improvements.csv")
        path = os.path.join(directory, prefix + "_layouts.json")
        with open(path, "w") as f:
            json.dump(
                {
                    "seed": config.seed,
                    "config_hash": config.config_hash(),
                    "layouts": results.layouts,
                },
                f,
                indent=2,
                sort_keys=True,
            )
        print(results.summary.to_string(index=False))
    return EXIT_OK


def _init_state(flags):
    if flags.problem:
        if flags.lower or flags.upper:
            raise errors.ConfigError("Give either --problem or --lower/--upper")
        indices = tuple(flags.env_indices) if flags.env_indices else None
        domain = testbed.get_problem(flags.problem, env_indices=indices).domain
    else:
        if not (flags.lower and flags.upper and flags.env_indices):
            raise errors.ConfigError(
                "init needs --problem or --lower, --upper and --env-indices"
            )
        domain = acqopt.Domain(flags.lower, flags.upper, env_indices=flags.env_indices)
    return envloop.CampaignState(
        domain,
        acquisition.AcquisitionSpec(flags.acquisition, beta=flags.beta),
        flags.budget,
        kernel_family=flags.kernel,
        seed=flags.seed,
    )


def _emit(body):
    print(json.dumps(body, sort_keys=True))


def cmd_asktell(flags):
    """One step of an ask-tell session; the session file is the only state."""
    store = session_cache.SessionStore(flags.session)
    if flags.step == "init":
        if store.exists() and not flags.force:
            raise errors.SessionError(
                "Session %s exists; pass --force to replace it" % flags.session
            )
        state = _init_state(flags)
        store.set(state)
        _emit({"session": flags.session, "budget": state.budget})
        return EXIT_OK

    if not store.exists():
        raise errors.SessionError("No session at %s; run init first" % flags.session)
    state = store.get()
    if flags.step == "suggest":
        if state.dataset is None:
            x = envloop.initial_point(state, flags.env)
        else:
            x = envloop.suggest(state, flags.env)
        _emit({"x": np.asarray(x).tolist(), "remaining": state.remaining})
    elif flags.step == "observe":
        y = None if flags.failed else flags.y
        envloop.observe(state, flags.x, y)
        store.set(state)
        _emit({"evaluations_used": state.evaluations_used,
               "remaining": state.remaining})
    elif flags.step == "predict":
        model = envloop.fit_model(state)
        ctrl, predicted = envloop.conditional_optimum(
            model,
            state.domain,
            flags.env,
            constraints=state.constraints,
            seed=state.seed,
            n_samples=state.n_samples,
            n_starts=state.n_starts,
        )
        _emit({"x_ctrl": np.asarray(ctrl).tolist(), "predicted": float(predicted)})
    else:
        body = {
            "evaluations_used": state.evaluations_used,
            "remaining": state.remaining,
            "observations": state.n_observations,
        }
        if state.dataset is not None:
            x, y = state.best()
            body.update(best_x=x.tolist(), best_y=y)
        _emit(body)
    return EXIT_OK


def main(argv=None):
    """Runs the command line and returns its exit code."""
    argv = sys.argv[1:] if argv is None else argv
    parser = _build_parser()
    try:
        flags = parser.parse_args(argv)
    except errors.ConfigError as e:
        print("envbo: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=getattr(logging, flags.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return flags.handler(flags)
    except (
        errors.ConfigError,
        errors.SessionError,
        errors.InvalidArgumentError,
        errors.EmptyDatasetError,
    ) as e:
        print("envbo: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.debug("Run failed", exc_info=True)
        print("envbo: %s: %s" % (type(e).__name__, e), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
