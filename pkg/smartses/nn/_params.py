# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "ParamStore",
    "Parameter",
    "ShapeError",
    "check_shape",
    "clip_by_global_norm",
    "glorot_uniform",
]

import collections.abc as cabc
import dataclasses
import logging
import math

import numpy as np

LOGGER = logging.getLogger(__name__)


class ShapeError(ValueError):
    """Raised if arrays passed to a kernel have inconsistent shapes."""


def check_shape(
    name: str, array: np.ndarray, shape: cabc.Sequence[int | None]
) -> None:
    """Check the shape of an array; None matches any dimension size."""
    if array.ndim != len(shape) or any(
        want is not None and have != want
        for have, want in zip(array.shape, shape, strict=True)
    ):
        pretty = tuple("*" if s is None else s for s in shape)
        raise ShapeError(f"{name} has shape {array.shape}, expected {pretty}")


def glorot_uniform(
    rng: np.random.Generator, shape: tuple[int, int]
) -> np.ndarray:
    """Uniform initialization in ``±sqrt(6 / (fan_in + fan_out))``."""
    limit = math.sqrt(6 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


@dataclasses.dataclass(eq=False)
class Parameter:
    """A named tensor with its gradient and Adam moment buffers."""

    name: str
    value: np.ndarray
    grad: np.ndarray = dataclasses.field(init=False, repr=False)
    m: np.ndarray = dataclasses.field(init=False, repr=False)
    v: np.ndarray = dataclasses.field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


class ParamStore(cabc.Mapping[str, Parameter]):
    """An ordered collection of parameters.

    The insertion order is significant: it determines the order of the
    tensors in checkpoints and of the gradient-norm summation.
    """

    def __init__(self) -> None:
        self.__params: dict[str, Parameter] = {}
        self.step = 0
        """Number of optimizer steps taken so far."""

    def __getitem__(self, name: str) -> Parameter:
        return self.__params[name]

    def __iter__(self) -> cabc.Iterator[str]:
        return iter(self.__params)

    def __len__(self) -> int:
        return len(self.__params)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} with {self.size} values>"

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self.__params:
            raise KeyError(f"Duplicate parameter name: {name}")
        param = Parameter(name, value)
        self.__params[name] = param
        return param

    @property
    def size(self) -> int:
        """Total number of scalar parameters."""
        return sum(p.value.size for p in self.__params.values())

    def zero_grad(self) -> None:
        for param in self.__params.values():
            param.grad.fill(0.0)

    def global_grad_norm(self) -> float:
        return math.sqrt(
            math.fsum(
                float(np.sum(p.grad * p.grad)) for p in self.__params.values()
            )
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of all parameter values, in order."""
        return {n: p.value.copy() for n, p in self.__params.items()}

    def load_state_dict(self, state: cabc.Mapping[str, np.ndarray]) -> None:
        """Replace all values; names and shapes must match exactly."""
        if set(state) != set(self.__params):
            missing = sorted(set(self.__params) - set(state))
            extra = sorted(set(state) - set(self.__params))
            raise KeyError(
                f"Parameter mismatch: missing {missing}, extra {extra}"
            )
        for name, param in self.__params.items():
            check_shape(name, np.asarray(state[name]), param.shape)
            param.value[...] = state[name]


def clip_by_global_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients down so that their joint norm is ``max_norm``.

    Returns
    -------
    float
        The global norm before clipping.
    """
    norm = store.global_grad_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for param in store.values():
            param.grad *= scale
        LOGGER.debug("Clipped gradient norm %.4g to %.4g", norm, max_norm)
    return norm
