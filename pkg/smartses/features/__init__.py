# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Feature extraction for the SES classifier.

:mod:`smartses.features.general` holds the statistical mobility
features of a user, :mod:`smartses.features.sequence` the per-time-bin
location sequences.
"""

from . import general, sequence
