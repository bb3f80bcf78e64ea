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

"""Test Package set up."""

import os

from envbo import _helpers as util

util.positional_parameters_enforcement = util.POSITIONAL_EXCEPTION

# Long stochastic acceptance runs only execute when this variable is set.
SLOW = bool(os.environ.get("ENVBO_SLOW_TESTS"))
