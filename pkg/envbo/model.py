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

"""Model objects for campaign sessions.

A session is the serialized form of a CampaignState. The model classes are
responsible for converting between the on-disk format and the Python object
representation, and for refusing documents they cannot read faithfully.
"""

import json
import logging

from envbo import acqopt
from envbo import acquisition
from envbo import envloop
from envbo import envsim
from envbo import errors

LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = 1

dump_session = False


def _abstract():
    raise NotImplementedError("You need to override this function")


class Model(object):
    """Model base class.

  All Model classes should implement this interface.
  The Model serializes and de-serializes between a storage
  format and a CampaignState.
  """

    def serialize(self, state):
        """Converts a CampaignState into the storage format.

    Args:
      state: envloop.CampaignState.

    Returns:
      string, the session in serialized form.
    """
        _abstract()

    def deserialize(self, content):
        """Converts stored content back into a CampaignState.

    Args:
      content: string or bytes, the stored session.

    Returns:
      envloop.CampaignState

    Raises:
      envbo.errors.SessionError: if the content cannot be read.
    """
        _abstract()


class JsonModel(Model):
    """Model class for JSON sessions.

  Every document carries ``schema_version``; documents with another version
  are refused rather than guessed at. Constraint functions are code, not
  data, and are not stored.
  """

    content_type = "application/json"

    def __init__(self, indent=None):
        """Construct a JsonModel.

    Args:
      indent: int or None, passed through to json.dumps.
    """
        self._indent = indent

    def to_body(self, state):
        body = {
            "schema_version": SCHEMA_VERSION,
            "method": state.method,
            "domain": state.domain.to_dict(),
            "acquisition": state.acq.to_dict(),
            "budget": state.budget,
            "kernel_family": state.kernel_family,
            "seed": state.seed,
            "mle_restarts": state.mle_restarts,
            "n_samples": state.n_samples,
            "n_starts": state.n_starts,
            "trace": [record.to_dict() for record in state.trace],
        }
        if state.env_walk is not None:
            body["env_walk"] = state.env_walk.to_dict()
        return body

    def serialize(self, state):
        content = json.dumps(self.to_body(state), indent=self._indent, sort_keys=True)
        if dump_session:
            LOGGER.info("--session-start--")
            LOGGER.info(content)
            LOGGER.info("--session-end--")
        return content

    def from_body(self, body):
        if not isinstance(body, dict):
            raise errors.SessionError("Session must be a JSON object")
        version = body.get("schema_version")
        if version != SCHEMA_VERSION:
            raise errors.SessionError(
                "Unsupported session schema_version %r (expected %d)"
                % (version, SCHEMA_VERSION)
            )
        try:
            state = envloop.CampaignState(
                acqopt.Domain.from_dict(body["domain"]),
                acquisition.AcquisitionSpec.from_dict(body["acquisition"]),
                body["budget"],
                kernel_family=body["kernel_family"],
                seed=body["seed"],
                method=body.get("method", envloop.METHOD_ENVBO),
                mle_restarts=body.get("mle_restarts", envloop.DEFAULT_MLE_RESTARTS),
                n_samples=body.get("n_samples", acqopt.DEFAULT_SAMPLES),
                n_starts=body.get("n_starts", acqopt.DEFAULT_STARTS),
            )
            for entry in body.get("trace", []):
                record = envloop.RunRecord.from_dict(entry)
                envloop.observe(
                    state,
                    record.x,
                    record.y,
                    acquisition_value=record.acquisition_value,
                    hyperparameters=record.hyperparameters,
                    wall_time=record.wall_time,
                )
            if "env_walk" in body:
                state.env_walk = envsim.EnvWalk.from_dict(body["env_walk"])
        except errors.SessionError:
            raise
        except (KeyError, TypeError, ValueError, errors.Error) as e:
            raise errors.SessionError("Malformed session: %r" % e)
        return state

    def deserialize(self, content):
        try:
            content = content.decode("utf-8")
        except AttributeError:
            pass
        try:
            body = json.loads(content)
        except ValueError as e:
            raise errors.SessionError("Session is not valid JSON: %s" % e)
        return self.from_body(body)
