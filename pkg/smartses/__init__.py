# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""The smartses package.

Estimates the socioeconomic status (SES) of transit riders from their
smart card fare records. The pipeline stages live in the subpackages:

- :mod:`smartses.ingest`: fare records, trips and user histories
- :mod:`smartses.context`: station functions, home stations and labels
- :mod:`smartses.features`: general and sequence features
- :mod:`smartses.nn`: the small reverse-mode kernel set
- :mod:`smartses.model`: the fused two-branch classifier
- :mod:`smartses.synth`: the synthetic city used for acceptance tests
"""

import platformdirs

dirs = platformdirs.PlatformDirs("smartses")
del platformdirs

from importlib import metadata

try:
    __version__ = metadata.version("smartses")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0+unknown"
del metadata

from .cli_helpers import *
from .config import RunConfig as RunConfig
from .config import load_config as load_config
