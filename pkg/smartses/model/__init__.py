# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""The fused sequence plus general feature SES classifier.

Besides the model itself, this package holds its training loop, the
evaluation metrics and the reference baselines it is compared against.
"""

from ._data import *
from ._metrics import *
from ._s2s import *
from ._train import *
