# Copyright 2024 The envbo Authors
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

import nox

test_dependencies = [
    "parameterized",
    "pytest",
    "pytest-cov",
    "coverage",
    "mock",
]


@nox.session(python=["3.10"])
def lint(session):
    session.install("flake8")
    session.run(
        "flake8",
        "envbo",
        "tests",
        "--count",
        "--select=E9,F63,F7,F82",
        "--show-source",
        "--statistics",
    )


@nox.session(python=["3.8", "3.9", "3.10", "3.11"])
def unit(session):
    constraints = "testing/constraints-%s.txt" % session.python
    session.install(*test_dependencies)
    session.install("-c", constraints, ".")

    # Run py.test against the unit tests.
    session.run(
        "py.test",
        "--quiet",
        "--cov=envbo",
        "--cov=tests",
        "--cov-append",
        "--cov-config=.coveragerc",
        "--cov-report=",
        "--cov-fail-under=85",
        "tests",
        *session.posargs,
    )


@nox.session(python="3.10")
def slow(session):
    """Long stochastic acceptance runs."""
    session.install(*test_dependencies)
    session.install(".")
    session.run(
        "py.test", "--quiet", "tests", *session.posargs, env={"ENVBO_SLOW_TESTS": "1"}
    )


@nox.session(python="3.10")
def smoke(session):
    session.install(".")
    session.run("envbo", "windfarm", "--preset", "windfarm-smoke", "--output",
                session.create_tmp())
