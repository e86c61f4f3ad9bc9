# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Global fixtures for pytest."""

import datetime
import decimal

import pytest

from smartses import helpers, ingest

MONDAY = datetime.date(2015, 4, 6)
"""A Monday inside the default study window."""
WINDOW_START = datetime.date(2015, 4, 1)

STATIONS = (
    ingest.Station(1, "Alpha", 31.20, 121.40),
    ingest.Station(2, "Beta", 31.20, 121.50),
    ingest.Station(3, "Gamma", 31.30, 121.40),
    ingest.Station(4, "Delta", 31.30, 121.50),
)


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run the desk-scale acceptance tests",
    )


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def make_trip(
    card_id: str,
    date: datetime.date,
    board: tuple[int, str],
    alight: tuple[int, str],
    fare: str = "3.0",
) -> ingest.Trip:
    """Build a trip from ``(station, "HH:MM:SS")`` pairs."""
    return ingest.Trip(
        card_id,
        date,
        board[0],
        helpers.parse_clock(board[1]),
        alight[0],
        helpers.parse_clock(alight[1]),
        decimal.Decimal(fare),
    )


def make_history(
    card_id: str, trips: list[ingest.Trip]
) -> ingest.UserHistory:
    """Build a history whose records are exactly the legs of the trips."""
    trips = sorted(trips, key=lambda t: (t.date, t.board_time))
    records = tuple(r for t in trips for r in t.legs())
    return ingest.UserHistory(card_id, records, tuple(trips))


def commuter(
    card_id: str,
    home: int,
    work: int,
    days: int = 8,
    start: datetime.date = WINDOW_START,
) -> ingest.UserHistory:
    """A user commuting between two stations on every weekday."""
    trips = []
    for offset in range(days):
        date = start + datetime.timedelta(days=offset)
        if date.weekday() >= 5:
            continue
        trips.append(
            make_trip(card_id, date, (home, "07:30:00"), (work, "08:10:00"))
        )
        trips.append(
            make_trip(card_id, date, (work, "18:00:00"), (home, "18:40:00"))
        )
    return make_history(card_id, trips)


@pytest.fixture
def registry() -> ingest.StationRegistry:
    """Four stations on a 0.1 degree square."""
    return ingest.StationRegistry(STATIONS)
