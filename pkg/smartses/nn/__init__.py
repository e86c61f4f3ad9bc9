# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""A small set of differentiable kernels on top of numpy.

The engine provides exactly what the fused SES classifier needs:
embeddings, an LSTM, dense layers, softmax cross-entropy, Adam, and a
finite-difference gradient checker to verify all of them. Everything
computes in 64 bit floating point.
"""

from ._gradcheck import *
from ._layers import *
from ._optim import *
from ._params import *
from .checkpoint import *
