# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Miscellaneous utility functions used throughout the modules."""

from __future__ import annotations

__all__ = [
    "EARTH_RADIUS_KM",
    "LatLon",
    "atomic_write",
    "centroid",
    "derive_seed",
    "entropy",
    "epoch_seconds",
    "format_clock",
    "from_epoch_seconds",
    "haversine_km",
    "parse_clock",
    "shares",
]

import calendar
import collections.abc as cabc
import contextlib
import datetime
import hashlib
import logging
import math
import os
import pathlib
import tempfile
import typing as t

import numpy as np
import numpy.typing as npt

LOGGER = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
"""Mean earth radius (IUGG) used for all great-circle distances."""
SECONDS_PER_DAY = 86400

LatLon = tuple[float, float]
_K = t.TypeVar("_K", bound=cabc.Hashable)


# Geometry
def haversine_km(
    lat1: npt.ArrayLike,
    lon1: npt.ArrayLike,
    lat2: npt.ArrayLike,
    lon2: npt.ArrayLike,
) -> t.Any:
    """Calculate the great circle distance between points, in km.

    All arguments are in decimal degrees on WGS-84 coordinates and are
    broadcast against each other, so that one point can be compared
    against an array of points in one call.

    Returns
    -------
    float | numpy.ndarray
        A plain float if all inputs were scalars, otherwise an array.
    """
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(lon2) - np.radians(lon1)
    a = (
        np.sin(dphi / 2) ** 2
        + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    )
    dist = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    if np.ndim(dist) == 0:
        return float(dist)
    return dist


def centroid(points: npt.ArrayLike) -> LatLon:
    """Return the unweighted arithmetic mean of ``(lat, lon)`` rows."""
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not len(arr):
        raise ValueError("Cannot compute the centroid of zero points")
    lat, lon = arr.mean(axis=0)
    return float(lat), float(lon)


# Information theory
def entropy(counts: npt.ArrayLike) -> float:
    """Shannon entropy of a count or share vector, in nats.

    Zero entries contribute nothing (``0 * ln 0`` is treated as 0).
    """
    arr = np.asarray(counts, dtype=np.float64)
    total = arr.sum()
    if total <= 0:
        return 0.0
    p = arr[arr > 0] / total
    return float(-(p * np.log(p)).sum()) + 0.0


def shares(counter: cabc.Mapping[_K, int | float]) -> dict[_K, float]:
    """Convert a mapping of counts into a mapping of shares.

    An all-zero (or empty) mapping yields all-zero shares.
    """
    total = math.fsum(counter.values())
    if total <= 0:
        return dict.fromkeys(counter, 0.0)
    return {k: v / total for k, v in counter.items()}


# Time handling
def parse_clock(value: str) -> int:
    """Parse a ``HH:MM:SS`` string into seconds of the day.

    Raises
    ------
    ValueError
        If the string is not a valid time of day.
    """
    fields = value.split(":")
    if len(fields) != 3:
        raise ValueError(f"Expected HH:MM:SS, found: {value}")
    hours, minutes, seconds = map(int, fields)
    if not (0 <= hours < 24 and 0 <= minutes < 60 and 0 <= seconds < 60):
        raise ValueError(f"Time of day out of range: {value}")
    return hours * 3600 + minutes * 60 + seconds


def format_clock(seconds: int) -> str:
    """Format seconds of the day as ``HH:MM:SS``."""
    if not 0 <= seconds < SECONDS_PER_DAY:
        raise ValueError(f"Seconds of day out of range: {seconds}")
    hours, rest = divmod(seconds, 3600)
    minutes, secs = divmod(rest, 60)
    return f"{hours:02d}:{minutes:02d}:{secs:02d}"


def epoch_seconds(date: datetime.date, seconds: int) -> int:
    """Convert a calendar date and seconds of day into epoch seconds.

    Dates are interpreted as UTC, so the conversion is independent of
    the machine's time zone.
    """
    return calendar.timegm(date.timetuple()) + seconds


def from_epoch_seconds(epoch: int) -> tuple[datetime.date, int]:
    """Inverse of :func:`epoch_seconds`."""
    days, seconds = divmod(int(epoch), SECONDS_PER_DAY)
    return datetime.date(1970, 1, 1) + datetime.timedelta(days=days), seconds


# Seeding
def derive_seed(seed: int, name: str) -> int:
    """Derive a named sub-seed from the top-level seed.

    The same ``(seed, name)`` pair always produces the same sub-seed,
    and different names produce independent streams.
    """
    digest = hashlib.blake2b(
        f"{seed}:{name}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF


# File handling
@contextlib.contextmanager
def _replace_atomically(
    path: str | os.PathLike[str], mode: str, **kwargs: t.Any
) -> cabc.Iterator[t.IO[t.Any]]:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmpname = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with open(fd, mode, **kwargs) as file:
            yield file
        os.replace(tmpname, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmpname)
        raise


@t.overload
def atomic_write(
    path: str | os.PathLike[str],
    *,
    binary: t.Literal[False] = ...,
    newline: str | None = ...,
) -> contextlib.AbstractContextManager[t.IO[str]]: ...
@t.overload
def atomic_write(
    path: str | os.PathLike[str], *, binary: t.Literal[True]
) -> contextlib.AbstractContextManager[t.IO[bytes]]: ...
def atomic_write(
    path: str | os.PathLike[str],
    *,
    binary: bool = False,
    newline: str | None = "\n",
) -> contextlib.AbstractContextManager[t.IO[t.Any]]:
    """Open a file for writing, replacing the target atomically.

    The contents are written to a temporary file in the same directory,
    which is moved into place only if the ``with`` block succeeds.
    Otherwise the temporary file is removed and the target is left
    untouched.

    Parameters
    ----------
    path
        The file to write.
    binary
        Open the file in binary mode instead of as UTF-8 text.
    newline
        Newline translation of text files, as for :func:`open`.
    """
    if binary:
        return _replace_atomically(path, "wb")
    return _replace_atomically(path, "w", encoding="utf-8", newline=newline)
