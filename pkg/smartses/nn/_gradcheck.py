# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = ["GradCheckReport", "grad_check", "relative_error"]

import collections.abc as cabc
import dataclasses
import logging

import numpy as np

from ._params import ParamStore

LOGGER = logging.getLogger(__name__)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Element-wise ``|a - n| / max(|a| + |n|, 1e-4)``."""
    return np.abs(analytic - numeric) / np.maximum(
        np.abs(analytic) + np.abs(numeric), 1e-4
    )


@dataclasses.dataclass(frozen=True)
class GradCheckReport:
    errors: dict[str, float]
    """Maximum relative error per parameter tensor."""
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> tuple[str, float] | None:
        if not self.errors:
            return None
        return max(self.errors.items(), key=lambda i: i[1])

    def to_text(self) -> str:
        lines = [
            f"{name}: max relative error {err:.3e}"
            + ("" if err <= self.tolerance else " FAILED")
            for name, err in self.errors.items()
        ]
        verdict = "PASSED" if self.passed else "FAILED"
        lines.append(
            f"gradient check {verdict} at tolerance {self.tolerance:g}"
        )
        return "\n".join(lines) + "\n"


def grad_check(
    closure: cabc.Callable[[], float],
    store: ParamStore,
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    *,
    max_checks: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Parameters
    ----------
    closure
        Computes the loss and writes the analytic gradients into the
        store. It is called once for the analytic gradients and twice
        per checked element, and must be deterministic.
    store
        The parameters to check.
    eps
        The finite-difference step.
    tolerance
        The maximum accepted relative error.
    max_checks
        Check at most this many randomly chosen elements per tensor.
        By default every element is checked.
    seed
        Seeds the choice of elements if ``max_checks`` is set.
    """
    rng = np.random.default_rng(seed)
    store.zero_grad()
    closure()
    analytic = {name: p.grad.copy() for name, p in store.items()}

    errors: dict[str, float] = {}
    for name, param in store.items():
        flat = param.value.reshape(-1)
        indices = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            indices = np.sort(rng.choice(flat.size, max_checks, replace=False))
        numeric = np.empty(len(indices))
        for n, idx in enumerate(indices):
            original = flat[idx]
            flat[idx] = original + eps
            plus = closure()
            flat[idx] = original - eps
            minus = closure()
            flat[idx] = original
            numeric[n] = (plus - minus) / (2 * eps)
        got = analytic[name].reshape(-1)[indices]
        errors[name] = (
            float(relative_error(got, numeric).max()) if len(indices) else 0.0
        )
        LOGGER.debug("Gradient check %s: %.3e", name, errors[name])

    for name, param in store.items():
        param.grad[...] = analytic[name]
    return GradCheckReport(errors, tolerance)
