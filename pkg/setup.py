# Copyright 2024 The envbo Authors. All Rights Reserved.
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

"""Setup script for envbo.

Bayesian optimization of controllable inputs under measured, uncontrolled
environmental inputs.
"""
from __future__ import print_function

import sys

if sys.version_info < (3, 8):
    print("envbo requires python3 version >= 3.8.", file=sys.stderr)
    sys.exit(1)

import io
import os
from setuptools import setup

packages = ["envbo"]

install_requires = [
    "numpy>=1.17.3,<3dev",
    "scipy>=1.7.0,<2dev",
    "pandas>=1.1.0,<3dev",
]

package_root = os.path.abspath(os.path.dirname(__file__))

readme_filename = os.path.join(package_root, "README.md")
with io.open(readme_filename, encoding="utf-8") as readme_file:
    readme = readme_file.read()

version = "0.3.0"

setup(
    name="envbo",
    version=version,
    description="Bayesian optimization with environmental variables",
    long_description=readme,
    long_description_content_type="text/markdown",
    author="The envbo Authors",
    install_requires=install_requires,
    python_requires=">=3.8",
    packages=packages,
    entry_points={"console_scripts": ["envbo = envbo.cli:main"]},
    license="Apache 2.0",
    keywords="bayesian optimization gaussian process environmental variables",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
    ],
)
