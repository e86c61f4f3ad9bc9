# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Station context, user station roles and SES labels.

Stations are classified by what most citizens use them for, based on
their rush-hour traffic and the points of interest around them. Every
user gets a home station, whose surrounding housing prices determine
the user's SES class.
"""

from ._function import *
from ._labels import *
from ._roles import *
