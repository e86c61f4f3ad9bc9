# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Reading and writing of parameter checkpoints.

A checkpoint is a single binary file:

1. The 8 magic bytes ``S2SCKPT\\0``.
2. The format version as little-endian unsigned 32 bit integer.
3. The length of the header in bytes, same encoding.
4. The header: UTF-8 encoded JSON with sorted keys, holding the
   ``written_by`` version, the list of ``tensors`` (each with ``name``,
   ``shape`` and element ``offset``) and free-form ``meta`` data.
5. The values of all tensors, in header order, as little-endian 64 bit
   floats in row-major order.

The file contains no timestamps, so the same parameters always produce
the same bytes.
"""

from __future__ import annotations

__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "Checkpoint",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
]

import collections.abc as cabc
import dataclasses
import importlib.metadata as imm
import json
import logging
import math
import os
import struct
import typing as t

import awesomeversion as av
import numpy as np

from smartses import helpers

from ._params import ParamStore

LOGGER = logging.getLogger(__name__)

MAGIC = b"S2SCKPT\0"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sII")
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    """Raised if a checkpoint file is malformed or incompatible."""


@dataclasses.dataclass(frozen=True)
class Checkpoint:
    tensors: dict[str, np.ndarray]
    meta: dict[str, t.Any]
    written_by: str


def _current_version() -> str:
    try:
        return imm.version("smartses")
    except imm.PackageNotFoundError:
        return "0.0.0"


def _verify_version(written_by: str) -> None:
    current_str = _current_version().partition("+")[0]
    try:
        current = av.AwesomeVersion(
            current_str, ensure_strategy=av.AwesomeVersionStrategy.PEP440
        )
        written = av.AwesomeVersion(
            written_by.partition("+")[0],
            ensure_strategy=av.AwesomeVersionStrategy.PEP440,
        )
        matches = current >= written
    except Exception as err:
        raise CheckpointError(
            "Cannot verify the version that wrote the checkpoint:"
            f" {type(err).__name__}: {err}"
        ) from None
    if not matches:
        raise CheckpointError(
            "This smartses is too old for this checkpoint:"
            f" Need at least v{written_by}, but have only v{current_str}"
        )


def save_checkpoint(
    path: str | os.PathLike[str],
    store: ParamStore | cabc.Mapping[str, np.ndarray],
    meta: cabc.Mapping[str, t.Any] | None = None,
) -> None:
    """Write parameters and metadata into a checkpoint file."""
    if isinstance(store, ParamStore):
        tensors = {n: p.value for n, p in store.items()}
    else:
        tensors = dict(store)

    entries = []
    offset = 0
    for name, value in tensors.items():
        if not np.all(np.isfinite(value)):
            raise CheckpointError(f"Tensor {name} has non-finite values")
        entries.append(
            {"name": name, "shape": list(value.shape), "offset": offset}
        )
        offset += value.size
    header = json.dumps(
        {
            "written_by": {"smartses": _current_version()},
            "tensors": entries,
            "meta": dict(meta or {}),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    with helpers.atomic_write(path, binary=True) as file:
        file.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        file.write(header)
        for value in tensors.values():
            file.write(np.ascontiguousarray(value, dtype=_DTYPE).tobytes())
    LOGGER.debug("Wrote %d tensors to %s", len(entries), path)


def load_checkpoint(path: str | os.PathLike[str]) -> Checkpoint:
    """Read a checkpoint file.

    Raises
    ------
    CheckpointError
        If the file is not a checkpoint, was written in an unknown
        format version or by a newer smartses, or is truncated.
    """
    with open(path, "rb") as file:
        data = file.read()
    if len(data) < _PREAMBLE.size:
        raise CheckpointError(f"Not a checkpoint file: {path}")
    magic, version, header_len = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"Not a checkpoint file: {path}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    start = _PREAMBLE.size + header_len
    try:
        header = json.loads(data[_PREAMBLE.size : start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"Corrupt checkpoint header: {err}") from None

    written_by = header.get("written_by", {}).get("smartses", "")
    if not written_by:
        raise CheckpointError("Checkpoint does not say who wrote it")
    _verify_version(written_by)

    if start > len(data) or (len(data) - start) % _DTYPE.itemsize:
        raise CheckpointError(f"Checkpoint truncated: {path}")
    values = (
        np.frombuffer(data, dtype=_DTYPE, offset=start)
        if start < len(data)
        else np.empty(0, dtype=_DTYPE)
    )
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        size = math.prod(entry["shape"])
        begin = entry["offset"]
        if begin + size > len(values):
            raise CheckpointError(f"Checkpoint truncated in {entry['name']}")
        tensors[entry["name"]] = (
            values[begin : begin + size]
            .reshape(entry["shape"])
            .astype(np.float64)
        )
    return Checkpoint(tensors, header.get("meta", {}), written_by)

