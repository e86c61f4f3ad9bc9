# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Per-time-bin location sequences of users.

The study window is cut into bins of equal width. Every bin of a user
is assigned a location, which is either a station or the in-vehicle
marker :data:`IN_VEHICLE`:

- A bin that contains a record belongs to that record's station. If a
  boarding and an alighting share a bin, the boarding wins.
- Bins strictly between a boarding and its alighting are in-vehicle.
- Bins strictly between an alighting and the next boarding are split:
  the first half (rounded up) stays at the alighting station, the rest
  is already at the next boarding station.
- Bins before the first boarding belong to its station, bins after the
  last alighting to the last alighting station.

The location of each bin is then translated into the station function
and the role of the station for the user.

Trips can be read back from the in-vehicle bins with
:func:`recover_trips`, but only trips that cross at least two bin
boundaries leave an in-vehicle bin behind. A trip that boards and
alights in the same or in adjacent bins is lost.
"""

from __future__ import annotations

__all__ = [
    "IN_VEHICLE",
    "SequenceFeature",
    "SequenceStats",
    "StudyWindow",
    "assign_bin_locations",
    "build_sequence",
    "load_sequences",
    "recover_trips",
    "sequence_stats",
    "sequence_summary",
    "stack_sequences",
    "write_sequences",
]

import collections.abc as cabc
import dataclasses
import datetime
import itertools
import logging
import os
import typing as t

import numpy as np

from smartses import helpers
from smartses.ingest import UserHistory
from smartses.modeltypes import StationFunction, StationRole

from .general import EmptyHistoryError

LOGGER = logging.getLogger(__name__)

IN_VEHICLE = -1
_UNASSIGNED = -2
DAY_PARTS = 4


@dataclasses.dataclass(frozen=True)
class StudyWindow:
    """A range of whole days, cut into bins of ``bin_minutes``."""

    start_date: datetime.date
    days: int
    bin_minutes: int = 15

    def __post_init__(self) -> None:
        if self.days < 1:
            raise ValueError("A study window needs at least one day")
        if self.bin_minutes < 1 or 60 % self.bin_minutes:
            raise ValueError("bin_minutes must divide 60")

    @property
    def bins_per_day(self) -> int:
        return 24 * 60 // self.bin_minutes

    @property
    def n_bins(self) -> int:
        return self.days * self.bins_per_day

    @property
    def bin_seconds(self) -> int:
        return self.bin_minutes * 60

    def bin_of(self, date: datetime.date, seconds: int) -> int | None:
        """Return the bin index of a point in time, or None if outside."""
        day = (date - self.start_date).days
        if not 0 <= day < self.days:
            return None
        return day * self.bins_per_day + seconds // self.bin_seconds

    def dates(self) -> list[datetime.date]:
        return [
            self.start_date + datetime.timedelta(days=i)
            for i in range(self.days)
        ]


class _BinnedTrip(t.NamedTuple):
    board_bin: int
    board_station: int
    alight_bin: int
    alight_station: int


def _binned_trips(
    history: UserHistory, window: StudyWindow
) -> list[_BinnedTrip]:
    binned = []
    for trip in sorted(
        history.trips, key=lambda tr: (tr.date, tr.board_time)
    ):
        board = window.bin_of(trip.date, trip.board_time)
        alight = window.bin_of(trip.date, trip.alight_time)
        if board is None or alight is None:
            continue
        binned.append(
            _BinnedTrip(board, trip.board_station, alight, trip.alight_station)
        )
    return binned


def assign_bin_locations(
    history: UserHistory,
    window: StudyWindow,
    *,
    gap_first_half: t.Literal["alight", "previous_board"] = "alight",
) -> np.ndarray:
    """Assign every bin of the window a location.

    Parameters
    ----------
    history
        The user's history. Only its trips are used; trips that start
        or end outside the window are ignored.
    window
        The study window.
    gap_first_half
        Which station owns the first half of the bins between two trips:
        the station of the preceding alighting, or the station of the
        preceding boarding.

    Returns
    -------
    numpy.ndarray
        An integer array of length ``window.n_bins``, holding the
        station id of every bin or :data:`IN_VEHICLE`.

    Raises
    ------
    EmptyHistoryError
        If the history has no trip inside the window.
    """
    trips = _binned_trips(history, window)
    if not trips:
        raise EmptyHistoryError(
            f"User {history.card_id} has no trips inside the study window"
        )

    loc = np.full(window.n_bins, _UNASSIGNED, dtype=np.int64)
    for trip in trips:
        loc[trip.board_bin + 1 : trip.alight_bin] = IN_VEHICLE
    for trip in trips:
        loc[trip.alight_bin] = trip.alight_station
    for trip in trips:
        loc[trip.board_bin] = trip.board_station

    for prev, nxt in itertools.pairwise(trips):
        gap = nxt.board_bin - prev.alight_bin - 1
        if gap <= 0:
            continue
        first = prev.alight_bin + 1
        half = (gap + 1) // 2
        if gap_first_half == "alight":
            loc[first : first + half] = prev.alight_station
        else:
            loc[first : first + half] = prev.board_station
        loc[first + half : nxt.board_bin] = nxt.board_station

    loc[: trips[0].board_bin] = trips[0].board_station
    loc[trips[-1].alight_bin + 1 :] = trips[-1].alight_station
    assert not np.any(loc == _UNASSIGNED)
    return loc


def recover_trips(locations: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Recover trips from the in-vehicle runs of a location sequence.

    Returns
    -------
    list[tuple[int, int, int, int]]
        ``(board_bin, board_station, alight_bin, alight_station)`` of
        each trip. The result is exact only for trips whose alighting
        bin lies at least two bins after their boarding bin, and only
        if no other record shares their boarding or alighting bin.
        Other trips are missing from the result.
    """
    trips = []
    locations = np.asarray(locations)
    moving = locations == IN_VEHICLE
    edges = np.flatnonzero(np.diff(moving.astype(np.int8)))
    starts = [e + 1 for e in edges if moving[e + 1]]
    ends = [e for e in edges if moving[e]]
    if len(moving) and moving[0]:
        raise ValueError("Location sequence starts inside a vehicle")
    for start, end in zip(starts, ends, strict=True):
        trips.append(
            (
                int(start - 1),
                int(locations[start - 1]),
                int(end + 1),
                int(locations[end + 1]),
            )
        )
    return trips


@dataclasses.dataclass(frozen=True)
class SequenceFeature:
    """The categorical per-bin features of one user.

    ``fm`` and ``fu`` hold the integer codes of
    :class:`~smartses.modeltypes.StationFunction` and
    :class:`~smartses.modeltypes.StationRole`. The time id of a bin is
    its index.
    """

    fm: np.ndarray
    fu: np.ndarray

    def __post_init__(self) -> None:
        if self.fm.shape != self.fu.shape or self.fm.ndim != 1:
            raise ValueError("fm and fu must be 1-D and of equal length")
        transfer_fm = self.fm == StationFunction.TRANSFER.code
        transfer_fu = self.fu == StationRole.TRANSFER.code
        if not np.array_equal(transfer_fm, transfer_fu):
            raise ValueError("Transfer bins of fm and fu disagree")

    @property
    def n_bins(self) -> int:
        return len(self.fm)

    @property
    def time_id(self) -> np.ndarray:
        return np.arange(self.n_bins, dtype=np.int64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SequenceFeature):
            return NotImplemented
        return bool(
            np.array_equal(self.fm, other.fm)
            and np.array_equal(self.fu, other.fu)
        )

    __hash__ = None  # type: ignore[assignment]


def build_sequence(
    locations: np.ndarray,
    functions: cabc.Mapping[int, StationFunction],
    roles: cabc.Mapping[int, StationRole],
) -> SequenceFeature:
    """Translate bin locations into station functions and user roles.

    Stations without a role for this user count as ``others``.

    Raises
    ------
    ValueError
        If a station in the sequence has no function.
    """
    fm = np.empty(len(locations), dtype=np.int8)
    fu = np.empty(len(locations), dtype=np.int8)
    for station in np.unique(locations):
        mask = locations == station
        if station == IN_VEHICLE:
            fm[mask] = StationFunction.TRANSFER.code
            fu[mask] = StationRole.TRANSFER.code
            continue
        try:
            function = functions[int(station)]
        except KeyError:
            raise ValueError(f"Station {station} has no function") from None
        fm[mask] = function.code
        fu[mask] = roles.get(int(station), StationRole.OTHERS).code
    return SequenceFeature(fm, fu)


class SequenceStats(t.NamedTuple):
    fm: dict[StationFunction, float]
    fu: dict[StationRole, float]


def sequence_stats(sequences: cabc.Iterable[SequenceFeature]) -> SequenceStats:
    """Share of each category over all bins of all users."""
    fm_counts = np.zeros(len(StationFunction), dtype=np.int64)
    fu_counts = np.zeros(len(StationRole), dtype=np.int64)
    for seq in sequences:
        fm_counts += np.bincount(seq.fm, minlength=len(StationFunction))
        fu_counts += np.bincount(seq.fu, minlength=len(StationRole))
    fm = zip(StationFunction, fm_counts.tolist(), strict=True)
    fu = zip(StationRole, fu_counts.tolist(), strict=True)
    return SequenceStats(helpers.shares(dict(fm)), helpers.shares(dict(fu)))


def sequence_summary(seq: SequenceFeature, bins_per_day: int) -> np.ndarray:
    """Category shares per part of the day, as a flat vector.

    The day is cut into four equal parts. For each part, the shares of
    the four station functions and the four roles are computed over all
    days of the window.
    """
    if seq.n_bins % bins_per_day or bins_per_day % DAY_PARTS:
        raise ValueError("The sequence does not consist of whole days")
    part = (seq.time_id % bins_per_day) // (bins_per_day // DAY_PARTS)
    n_fm, n_fu = len(StationFunction), len(StationRole)
    summary = np.zeros((DAY_PARTS, n_fm + n_fu), dtype=np.float64)
    for p in range(DAY_PARTS):
        mask = part == p
        summary[p, :n_fm] = np.bincount(seq.fm[mask], minlength=n_fm)
        summary[p, n_fm:] = np.bincount(seq.fu[mask], minlength=n_fu)
        summary[p] /= mask.sum()
    return summary.ravel()


def stack_sequences(
    sequences: cabc.Sequence[SequenceFeature],
) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences into ``(batch, n_bins)`` code matrices."""
    if not sequences:
        raise ValueError("Cannot stack zero sequences")
    lengths = {s.n_bins for s in sequences}
    if len(lengths) != 1:
        raise ValueError(f"Sequences differ in length: {sorted(lengths)}")
    fm = np.stack([s.fm for s in sequences]).astype(np.int64)
    fu = np.stack([s.fu for s in sequences]).astype(np.int64)
    return fm, fu


def _encode(seq: SequenceFeature) -> str:
    tokens = []
    pairs = zip(seq.fm.tolist(), seq.fu.tolist(), strict=True)
    for (fm, fu), run in itertools.groupby(pairs):
        function = StationFunction.from_code(fm)
        role = StationRole.from_code(fu)
        tokens.append(f"{function},{role}@{sum(1 for _ in run)}")
    return " ".join(tokens)


def _decode(text: str) -> SequenceFeature:
    fm: list[int] = []
    fu: list[int] = []
    for token in text.split():
        pair, _, count = token.rpartition("@")
        function, _, role = pair.partition(",")
        n = int(count)
        if n < 1:
            raise ValueError(f"Invalid run length in token {token!r}")
        fm.extend([StationFunction.parse(function).code] * n)
        fu.extend([StationRole.parse(role).code] * n)
    return SequenceFeature(
        np.asarray(fm, dtype=np.int8), np.asarray(fu, dtype=np.int8)
    )


def write_sequences(
    sequences: cabc.Mapping[str, SequenceFeature],
    path: str | os.PathLike[str],
) -> None:
    """Write run-length encoded sequences, one user per line.

    Each line holds the card id followed by ``function,role@count``
    tokens, separated by single spaces.
    """
    with helpers.atomic_write(path) as file:
        for card_id, seq in sequences.items():
            file.write(f"{card_id} {_encode(seq)}\n")


def load_sequences(
    path: str | os.PathLike[str],
) -> dict[str, SequenceFeature]:
    sequences = {}
    with open(path, encoding="utf-8") as file:
        for lineno, line in enumerate(file, start=1):
            if not line.strip():
                continue
            card_id, _, body = line.strip().partition(" ")
            try:
                sequences[card_id] = _decode(body)
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    return sequences
