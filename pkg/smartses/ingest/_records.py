# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Parsing and writing of raw fare records and the station registry."""

from __future__ import annotations

__all__ = [
    "RECORD_COLUMNS",
    "CardRecord",
    "ParseResult",
    "RecordFormatError",
    "Reject",
    "Station",
    "StationRegistry",
    "format_record",
    "parse_line",
    "parse_records",
    "write_records",
    "write_rejects",
]

import collections.abc as cabc
import csv
import dataclasses
import datetime
import decimal
import io
import logging
import os
import re
import typing as t

import numpy as np
import pandas as pd

from smartses import helpers

LOGGER = logging.getLogger(__name__)

RECORD_COLUMNS = ("id", "date", "time", "station_name", "fare")
REGISTRY_COLUMNS = ("station_id", "station_name", "lat", "lon")
_RE_DATE = re.compile(r"\d{4}/\d{2}/\d{2}")
_RE_TIME = re.compile(r"\d{2}:\d{2}:\d{2}")


class RecordFormatError(ValueError):
    """Raised for a fare record line that cannot be accepted."""


@dataclasses.dataclass(frozen=True, slots=True)
class CardRecord:
    """One fare-system event of one card.

    A fare of exactly zero marks a boarding; a positive fare marks the
    alighting that closes a journey.
    """

    card_id: str
    date: datetime.date
    time: int
    """Seconds since midnight."""
    station_id: int
    fare: decimal.Decimal

    def __post_init__(self) -> None:
        if not self.fare.is_finite() or self.fare < 0:
            raise RecordFormatError(f"Invalid fare: {self.fare}")
        if not 0 <= self.time < helpers.SECONDS_PER_DAY:
            raise RecordFormatError(f"Time of day out of range: {self.time}")

    @property
    def is_boarding(self) -> bool:
        return self.fare == 0

    @property
    def epoch(self) -> int:
        return helpers.epoch_seconds(self.date, self.time)


class Station(t.NamedTuple):
    """A row of the station registry."""

    station_id: int
    name: str
    lat: float
    lon: float


class StationRegistry(cabc.Mapping[int, Station]):
    """Maps station names to numeric ids and ids to coordinates.

    The registry is immutable after construction and safe for shared
    read access.
    """

    def __init__(self, stations: cabc.Iterable[Station]) -> None:
        self.__by_id: dict[int, Station] = {}
        self.__by_name: dict[str, Station] = {}
        for station in sorted(stations):
            if station.station_id in self.__by_id:
                raise ValueError(f"Duplicate station id {station.station_id}")
            if station.name in self.__by_name:
                raise ValueError(f"Duplicate station name {station.name!r}")
            self.__by_id[station.station_id] = station
            self.__by_name[station.name] = station

    def __getitem__(self, station_id: int) -> Station:
        return self.__by_id[station_id]

    def __iter__(self) -> cabc.Iterator[int]:
        return iter(self.__by_id)

    def __len__(self) -> int:
        return len(self.__by_id)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} with {len(self)} stations>"

    def by_name(self, name: str) -> Station:
        """Find a station by its name.

        Raises
        ------
        KeyError
            If no station with this name is registered.
        """
        return self.__by_name[name]

    def coords(self, station_id: int) -> helpers.LatLon:
        """Return the ``(lat, lon)`` of a station."""
        station = self.__by_id[station_id]
        return station.lat, station.lon

    def coord_map(self) -> dict[int, helpers.LatLon]:
        """Return the ``(lat, lon)`` of every station, by id."""
        return {i: (s.lat, s.lon) for i, s in self.__by_id.items()}

    def coord_array(self, station_ids: cabc.Iterable[int]) -> np.ndarray:
        """Return an ``(n, 2)`` array of ``(lat, lon)`` rows."""
        rows = [self.coords(i) for i in station_ids]
        return np.asarray(rows, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> StationRegistry:
        """Load a registry file with ``station_id,station_name,lat,lon``."""
        frame = pd.read_csv(
            path,
            dtype={"station_id": "int64", "station_name": str},
            float_precision="round_trip",
            keep_default_na=False,
        )
        missing = set(REGISTRY_COLUMNS) - set(frame.columns)
        if missing:
            raise ValueError(
                f"Station registry {path} lacks columns: {sorted(missing)}"
            )
        return cls(
            Station(
                int(r.station_id), r.station_name, float(r.lat), float(r.lon)
            )
            for r in frame.itertuples(index=False)
        )

    def save(self, path: str | os.PathLike[str]) -> None:
        frame = pd.DataFrame(
            [tuple(s) for s in self.values()], columns=list(REGISTRY_COLUMNS)
        )
        with helpers.atomic_write(path, newline="") as file:
            frame.to_csv(file, index=False, lineterminator="\n")


class Reject(t.NamedTuple):
    """A rejected input line."""

    lineno: int
    reason: str
    text: str


class ParseResult(t.NamedTuple):
    records: list[CardRecord]
    rejects: list[Reject]

    @property
    def n_rejected(self) -> int:
        return len(self.rejects)


def parse_line(
    fields: cabc.Sequence[str], registry: StationRegistry
) -> CardRecord:
    """Convert the fields of one record line into a :class:`CardRecord`.

    Raises
    ------
    RecordFormatError
        If any field is malformed or the station name is unknown. Values
        are never coerced: a date like ``2015/4/2`` is rejected.
    """
    if len(fields) != len(RECORD_COLUMNS):
        raise RecordFormatError(
            f"Expected {len(RECORD_COLUMNS)} fields, found {len(fields)}"
        )
    card_id, date_s, time_s, station_name, fare_s = map(str.strip, fields)
    if not card_id:
        raise RecordFormatError("Empty card id")

    if not _RE_DATE.fullmatch(date_s):
        raise RecordFormatError(f"Malformed date: {date_s!r}")
    try:
        date = datetime.datetime.strptime(date_s, "%Y/%m/%d").date()
    except ValueError:
        raise RecordFormatError(f"Invalid date: {date_s!r}") from None

    if not _RE_TIME.fullmatch(time_s):
        raise RecordFormatError(f"Malformed time: {time_s!r}")
    try:
        time = helpers.parse_clock(time_s)
    except ValueError as err:
        raise RecordFormatError(str(err)) from None

    try:
        fare = decimal.Decimal(fare_s)
    except decimal.InvalidOperation:
        raise RecordFormatError(f"Malformed fare: {fare_s!r}") from None
    if not fare.is_finite() or fare < 0:
        raise RecordFormatError(f"Invalid fare: {fare_s!r}")

    try:
        station = registry.by_name(station_name)
    except KeyError:
        raise RecordFormatError(
            f"Unknown station name: {station_name!r}"
        ) from None

    return CardRecord(card_id, date, time, station.station_id, fare)


def parse_records(
    stream: t.IO[bytes] | t.IO[str] | cabc.Iterable[bytes | str],
    registry: StationRegistry,
    *,
    delimiter: str = ",",
) -> ParseResult:
    """Parse raw fare records, one per line.

    The columns are ``id,date,time,station_name,fare``, with dates as
    ``YYYY/MM/DD`` and times as ``HH:MM:SS``. A header line with exactly
    these column names is skipped if it is the first line. Blank lines
    are ignored.

    Parameters
    ----------
    stream
        A binary or text stream, or any iterable of lines. Binary input
        is decoded as UTF-8 line by line, so that a single undecodable
        line is rejected instead of aborting the whole file.
    registry
        Resolves station names into station ids.
    delimiter
        The field separator.

    Returns
    -------
    ParseResult
        The accepted records in input order, and the rejected lines with
        their line numbers and reasons.
    """
    records: list[CardRecord] = []
    rejects: list[Reject] = []
    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as err:
                reject = Reject(lineno, f"Not UTF-8: {err.reason}", repr(raw))
                rejects.append(reject)
                LOGGER.debug("Rejected line %d: %s", lineno, reject.reason)
                continue
        else:
            line = raw
        line = line.rstrip("\r\n")
        if lineno == 1:
            line = line.lstrip("\ufeff")
        if not line.strip():
            continue

        try:
            (fields,) = csv.reader(io.StringIO(line), delimiter=delimiter)
        except csv.Error as err:
            rejects.append(Reject(lineno, f"Malformed line: {err}", line))
            LOGGER.debug("Rejected line %d: %s", lineno, err)
            continue
        if lineno == 1 and tuple(f.strip() for f in fields) == RECORD_COLUMNS:
            continue
        try:
            records.append(parse_line(fields, registry))
        except RecordFormatError as err:
            rejects.append(Reject(lineno, str(err), line))
            LOGGER.debug("Rejected line %d: %s", lineno, err)

    if rejects:
        LOGGER.warning("Rejected %d of %d lines", len(rejects), lineno)
    return ParseResult(records, rejects)


def format_record(record: CardRecord, registry: StationRegistry) -> str:
    """Serialize a record into one line of the raw record format.

    This is the inverse of :func:`parse_line`; a record survives the
    round trip with all fields unchanged.
    """
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(
        (
            record.card_id,
            record.date.strftime("%Y/%m/%d"),
            helpers.format_clock(record.time),
            registry[record.station_id].name,
            str(record.fare),
        )
    )
    return buf.getvalue()


def write_records(
    records: cabc.Iterable[CardRecord],
    registry: StationRegistry,
    path: str | os.PathLike[str],
) -> int:
    """Write records in the raw record format, with a header line.

    Returns
    -------
    int
        The number of records written.
    """
    count = 0
    with helpers.atomic_write(path) as file:
        file.write(",".join(RECORD_COLUMNS) + "\n")
        for record in records:
            file.write(format_record(record, registry) + "\n")
            count += 1
    return count


def write_rejects(
    rejects: cabc.Iterable[Reject], path: str | os.PathLike[str]
) -> None:
    """Write the reject log, one line per rejected input line."""
    with helpers.atomic_write(path, newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(("line", "reason", "text"))
        writer.writerows(rejects)
