# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Ingestion of raw smart card fare records.

Raw records are parsed against a :class:`StationRegistry`, grouped per
card and paired into trips. Users with enough active days are kept for
the later stages.
"""

from ._records import *
from ._trips import *
