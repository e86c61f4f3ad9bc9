# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = ["adam_step"]

import numpy as np

from ._params import ParamStore


def adam_step(
    store: ParamStore,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update to all parameters in place.

    The gradients must already be populated. Parameters whose gradient
    has always been zero are left unchanged.
    """
    store.step += 1
    correction1 = 1.0 - beta1**store.step
    correction2 = 1.0 - beta2**store.step
    for param in store.values():
        param.m *= beta1
        param.m += (1.0 - beta1) * param.grad
        param.v *= beta2
        param.v += (1.0 - beta2) * param.grad**2
        m_hat = param.m / correction1
        v_hat = param.v / correction2
        param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
