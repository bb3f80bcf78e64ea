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

"""Errors for the library.

All exceptions defined by the library
should be defined in this file.
"""


class Error(Exception):
    """Base error for this module."""

    pass


class InvalidArgumentError(Error, ValueError):
    """An argument is outside the domain of the operation."""

    pass


class DimensionMismatchError(InvalidArgumentError):
    """Array shapes do not agree with the problem dimensionality."""

    pass


class ZeroTruthError(InvalidArgumentError):
    """A percentage error was requested against a true value of zero."""

    pass


class SingularCovarianceError(Error):
    """The covariance matrix could not be factorized."""

    def __init__(self, jitter, n=None):
        self.jitter = jitter
        self.n = n
        super(SingularCovarianceError, self).__init__(
            "Covariance matrix is not positive definite even with jitter %.3g"
            % jitter
        )

    def __repr__(self):
        if self.n is None:
            return '<SingularCovarianceError jitter=%.3g>' % self.jitter
        return '<SingularCovarianceError n=%d jitter=%.3g>' % (self.n, self.jitter)


class UndefinedAcquisitionError(Error):
    """The acquisition criterion has no finite value at this input."""

    pass


class EmptyDatasetError(Error):
    """The operation needs at least one observation."""

    pass


class ObjectiveError(Error):
    """The objective could not be evaluated at a point."""

    def __init__(self, x, cause=None):
        self.x = x
        self.cause = cause
        super(ObjectiveError, self).__init__(
            "Objective evaluation failed at %s: %r" % (list(x), cause)
        )


class ConfigError(Error):
    """A campaign configuration is malformed or inconsistent."""

    pass


class SessionError(Error):
    """A session file is missing, corrupt or of an unsupported version."""

    pass
