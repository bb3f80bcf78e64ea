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

"""File based store for ask-tell sessions.

Each session lives in a single file. Writes go to a temporary file in the
same directory which then replaces the session in one ``os.replace`` call,
so an interrupted write leaves the previous session intact.
"""

import logging
import os
import tempfile

from envbo import errors
from envbo import model as model_lib

LOGGER = logging.getLogger(__name__)


class SessionStore(object):
    """A session file read and written through a Model."""

    def __init__(self, path, model=None):
        """Constructor.

      Args:
        path: str, location of the session file.
        model: model.Model, the codec; JsonModel by default.
      """
        self._path = path
        self._model = model or model_lib.JsonModel(indent=2)

    @property
    def path(self):
        return self._path

    def exists(self):
        return os.path.exists(self._path)

    def get(self):
        """Loads the stored CampaignState.

      Raises:
        envbo.errors.SessionError: missing, unreadable or corrupt file.
      """
        try:
            with open(self._path, "rb") as f:
                content = f.read()
        except (IOError, OSError) as e:
            raise errors.SessionError("Cannot read session %s: %s" % (self._path, e))
        return self._model.deserialize(content)

    def set(self, state):
        """Atomically replaces the stored session with ``state``."""
        content = self._model.serialize(state)
        directory = os.path.dirname(os.path.abspath(self._path))
        fd, tmp_path = tempfile.mkstemp(
            prefix=".%s." % os.path.basename(self._path), dir=directory
        )
        try:
            with os.fdopen(fd, "w") as f:
                f.write(content)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_path, self._path)
        except Exception:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise
        LOGGER.debug(
            "Session %s written with %d evaluations", self._path, state.evaluations_used
        )


def load(path):
    return SessionStore(path).get()


def save(path, state):
    SessionStore(path).set(state)
