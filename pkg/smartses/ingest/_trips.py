# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Trip reconstruction, user histories and frequent-user selection."""

from __future__ import annotations

__all__ = [
    "TRIP_COLUMNS",
    "IngestStats",
    "Trip",
    "UserHistory",
    "build_histories",
    "build_history",
    "filter_frequent_users",
    "ingest_stats",
    "load_histories",
    "reconstruct_trips",
    "write_trips",
]

import collections
import collections.abc as cabc
import concurrent.futures
import csv
import dataclasses
import datetime
import decimal
import itertools
import logging
import operator
import os

import pandas as pd

from smartses import helpers

from ._records import CardRecord

LOGGER = logging.getLogger(__name__)

TRIP_COLUMNS = (
    "card_id",
    "board_station_id",
    "board_epoch_s",
    "alight_station_id",
    "alight_epoch_s",
    "fare",
)


@dataclasses.dataclass(frozen=True, slots=True)
class Trip:
    """A paired boarding and alighting of one card on one service day."""

    card_id: str
    date: datetime.date
    board_station: int
    board_time: int
    alight_station: int
    alight_time: int
    fare: decimal.Decimal

    def __post_init__(self) -> None:
        if self.board_time >= self.alight_time:
            raise ValueError(
                f"Trip of card {self.card_id} alights before boarding"
            )
        if self.fare <= 0:
            raise ValueError(f"Trip of card {self.card_id} has no fare")

    @property
    def board_epoch(self) -> int:
        return helpers.epoch_seconds(self.date, self.board_time)

    @property
    def alight_epoch(self) -> int:
        return helpers.epoch_seconds(self.date, self.alight_time)

    def legs(self) -> tuple[CardRecord, CardRecord]:
        """Return the boarding and alighting records of this trip."""
        return (
            CardRecord(
                self.card_id,
                self.date,
                self.board_time,
                self.board_station,
                decimal.Decimal("0.0"),
            ),
            CardRecord(
                self.card_id,
                self.date,
                self.alight_time,
                self.alight_station,
                self.fare,
            ),
        )


@dataclasses.dataclass(frozen=True)
class UserHistory:
    """All records of one card, with the trips reconstructed from them."""

    card_id: str
    records: tuple[CardRecord, ...]
    trips: tuple[Trip, ...]
    orphans: tuple[CardRecord, ...] = ()

    @property
    def dates(self) -> frozenset[datetime.date]:
        return frozenset(r.date for r in self.records)

    @property
    def active_days(self) -> int:
        """The number of distinct dates with at least one record."""
        return len(self.dates)

    @property
    def boardings(self) -> tuple[CardRecord, ...]:
        return tuple(r for r in self.records if r.is_boarding)


def _sort_key(record: CardRecord) -> tuple[datetime.date, int]:
    return record.date, record.time


def reconstruct_trips(
    records: cabc.Sequence[CardRecord],
) -> tuple[list[Trip], list[CardRecord]]:
    """Pair boardings with the following alighting of the same card.

    The records are scanned in order. A boarding opens a pending trip,
    the next alighting on the same day closes it. A boarding while a
    trip is pending orphans the pending boarding; an alighting without
    a pending boarding is an orphan as well. Pending boardings never
    carry over into the next service day.

    Parameters
    ----------
    records
        The time-sorted records of a single card.

    Returns
    -------
    list[Trip]
        The reconstructed trips, in order.
    list[CardRecord]
        The orphaned records, in order. Every input record ends up in
        exactly one trip or in this list.

    Raises
    ------
    ValueError
        If the records belong to more than one card.
    """
    if len({r.card_id for r in records}) > 1:
        raise ValueError("Records of more than one card passed")

    trips: list[Trip] = []
    orphans: list[CardRecord] = []
    pending: CardRecord | None = None
    for record in records:
        if pending is not None and record.date != pending.date:
            orphans.append(pending)
            pending = None

        if record.is_boarding:
            if pending is not None:
                orphans.append(pending)
            pending = record
        elif pending is None:
            orphans.append(record)
        elif record.time <= pending.time:
            orphans.extend((pending, record))
            pending = None
        else:
            trips.append(
                Trip(
                    record.card_id,
                    record.date,
                    pending.station_id,
                    pending.time,
                    record.station_id,
                    record.time,
                    record.fare,
                )
            )
            pending = None

    if pending is not None:
        orphans.append(pending)
    return trips, orphans


def build_history(
    card_id: str, records: cabc.Iterable[CardRecord]
) -> UserHistory:
    """Sort one card's records and reconstruct its trips."""
    ordered = sorted(records, key=_sort_key)
    trips, orphans = reconstruct_trips(ordered)
    return UserHistory(card_id, tuple(ordered), tuple(trips), tuple(orphans))


def build_histories(
    records: cabc.Iterable[CardRecord], *, threads: int = 1
) -> list[UserHistory]:
    """Partition records by card and build one history per card.

    Cards are processed independently. With ``threads > 1`` the
    partitions are handed to a process pool; the result is always
    ordered by card id, so the output does not depend on the degree of
    parallelism.
    """
    partitions: dict[str, list[CardRecord]] = collections.defaultdict(list)
    for record in records:
        partitions[record.card_id].append(record)
    card_ids = sorted(partitions)

    if threads <= 1 or len(card_ids) < 2:
        histories = [build_history(c, partitions[c]) for c in card_ids]
    else:
        with concurrent.futures.ProcessPoolExecutor(threads) as pool:
            histories = list(
                pool.map(
                    build_history,
                    card_ids,
                    [partitions[c] for c in card_ids],
                    chunksize=max(1, len(card_ids) // (threads * 4)),
                )
            )

    n_orphans = sum(len(h.orphans) for h in histories)
    if n_orphans:
        LOGGER.info(
            "Excluded %d orphaned records from %d cards",
            n_orphans,
            sum(1 for h in histories if h.orphans),
        )
    return histories


def filter_frequent_users(
    histories: cabc.Iterable[UserHistory], min_days: int = 7
) -> list[UserHistory]:
    """Keep exactly the histories with at least ``min_days`` active days."""
    if min_days < 1:
        raise ValueError(f"min_days must be at least 1, got {min_days}")
    return [h for h in histories if h.active_days >= min_days]


@dataclasses.dataclass(frozen=True)
class IngestStats:
    """Descriptive statistics of the ingested population."""

    n_users: int = 0
    n_records: int = 0
    n_trips: int = 0
    n_orphans: int = 0
    user_share: dict[int, float] = dataclasses.field(default_factory=dict)
    """Share of users per number of active days."""
    trip_share: dict[int, float] = dataclasses.field(default_factory=dict)
    """Share of trips taken by users with that many active days."""
    frequent_user_share: float = 0.0
    frequent_trip_share: float = 0.0
    single_trip_user_share: float = 0.0


def ingest_stats(
    histories: cabc.Iterable[UserHistory], *, min_days: int = 7
) -> IngestStats:
    """Summarize user and trip counts per active-day bucket.

    Empty input produces an all-zero summary.
    """
    histories = list(histories)
    if not histories:
        return IngestStats()

    users: collections.Counter[int] = collections.Counter()
    trips: collections.Counter[int] = collections.Counter()
    for history in histories:
        users[history.active_days] += 1
        trips[history.active_days] += len(history.trips)
    users = collections.Counter(dict(sorted(users.items())))
    trips = collections.Counter({k: trips[k] for k in users})

    n_trips = sum(trips.values())
    frequent = [d for d in users if d >= min_days]
    return IngestStats(
        n_users=len(histories),
        n_records=sum(len(h.records) for h in histories),
        n_trips=n_trips,
        n_orphans=sum(len(h.orphans) for h in histories),
        user_share=helpers.shares(users),
        trip_share=helpers.shares(trips),
        frequent_user_share=sum(users[d] for d in frequent) / len(histories),
        frequent_trip_share=(
            sum(trips[d] for d in frequent) / n_trips if n_trips else 0.0
        ),
        single_trip_user_share=(
            sum(1 for h in histories if len(h.trips) == 1) / len(histories)
        ),
    )


def write_trips(
    histories: cabc.Iterable[UserHistory], path: str | os.PathLike[str]
) -> int:
    """Write the trip file of all given histories.

    Returns
    -------
    int
        The number of trips written.
    """
    count = 0
    with helpers.atomic_write(path, newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(TRIP_COLUMNS)
        for history in histories:
            for trip in history.trips:
                writer.writerow(
                    (
                        trip.card_id,
                        trip.board_station,
                        trip.board_epoch,
                        trip.alight_station,
                        trip.alight_epoch,
                        trip.fare,
                    )
                )
                count += 1
    return count


def load_histories(path: str | os.PathLike[str]) -> list[UserHistory]:
    """Rebuild user histories from a trip file.

    The records of each history are the two legs of every trip; orphans
    were already excluded when the trip file was written.
    """
    frame = pd.read_csv(
        path,
        dtype={
            "card_id": str,
            "board_station_id": "int64",
            "board_epoch_s": "int64",
            "alight_station_id": "int64",
            "alight_epoch_s": "int64",
            "fare": str,
        },
        keep_default_na=False,
    )
    missing = set(TRIP_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"Trip file {path} lacks columns: {sorted(missing)}")

    trips: list[Trip] = []
    for row in frame.itertuples(index=False):
        date, board_time = helpers.from_epoch_seconds(row.board_epoch_s)
        alight_date, alight_time = helpers.from_epoch_seconds(
            row.alight_epoch_s
        )
        if alight_date != date:
            raise ValueError(f"Trip of card {row.card_id} spans two days")
        trips.append(
            Trip(
                row.card_id,
                date,
                int(row.board_station_id),
                board_time,
                int(row.alight_station_id),
                alight_time,
                decimal.Decimal(row.fare),
            )
        )

    trips.sort(key=operator.attrgetter("card_id", "date", "board_time"))
    histories = []
    for card_id, group in itertools.groupby(
        trips, key=operator.attrgetter("card_id")
    ):
        card_trips = tuple(group)
        records = itertools.chain.from_iterable(t.legs() for t in card_trips)
        histories.append(UserHistory(card_id, tuple(records), card_trips))
    return histories
