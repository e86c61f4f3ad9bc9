# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Synthetic cities, populations and their fare records.

The generator plants a known SES class, home and work station for every
agent and lets the classes differ in their daily routines. The records
it emits can be fed through the complete pipeline, and the planted
truth tells how much of it the pipeline recovers.
"""

from ._city import *
from ._population import *
from ._simulate import *
