# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Per-user station roles: home, work and everything else."""

from __future__ import annotations

__all__ = [
    "UnlabelableUserError",
    "infer_home_station",
    "infer_user_station_roles",
    "infer_work_station",
]

import collections
import datetime
import logging

from smartses.ingest import UserHistory
from smartses.modeltypes import StationRole

LOGGER = logging.getLogger(__name__)

WORK_HOURS = (7 * 3600, 19 * 3600)


class UnlabelableUserError(ValueError):
    """Raised if a user cannot be given a home station or SES label."""


def infer_home_station(history: UserHistory) -> int:
    """Find the station a user most often starts the day at.

    Ties are broken by the total number of records at the station, and
    then by the smaller station id, which makes the result independent
    of the order of the input records.

    Raises
    ------
    UnlabelableUserError
        If the history contains no boarding at all.
    """
    first: dict[datetime.date, tuple[int, int]] = {}
    for record in history.records:
        if not record.is_boarding:
            continue
        key = (record.time, record.station_id)
        if record.date not in first or key < first[record.date]:
            first[record.date] = key
    if not first:
        raise UnlabelableUserError(
            f"User {history.card_id} has no boarding records"
        )

    firsts = collections.Counter(s for _, s in first.values())
    visits = collections.Counter(r.station_id for r in history.records)
    return min(firsts, key=lambda s: (-firsts[s], -visits[s], s))


def infer_work_station(
    history: UserHistory, home: int, *, min_visits: int = 2
) -> int | None:
    """Find the non-home station with most weekday daytime activity.

    Only records on Monday to Friday between 07:00 and 19:00 count. The
    winner needs at least ``min_visits`` of them; ties go to the smaller
    station id.
    """
    start, end = WORK_HOURS
    counts = collections.Counter(
        r.station_id
        for r in history.records
        if r.station_id != home
        and r.date.weekday() < 5
        and start <= r.time < end
    )
    if not counts:
        return None
    station = min(counts, key=lambda s: (-counts[s], s))
    if counts[station] < min_visits:
        return None
    return station


def infer_user_station_roles(
    history: UserHistory, home: int, *, min_visits: int = 2
) -> dict[int, StationRole]:
    """Assign every station of a user its role for that user.

    Returns
    -------
    dict[int, StationRole]
        The role of each station in the history, including the home
        station even if the history never touches it.
    """
    roles = dict.fromkeys(
        sorted({r.station_id for r in history.records} | {home}),
        StationRole.OTHERS,
    )
    roles[home] = StationRole.HOME
    work = infer_work_station(history, home, min_visits=min_visits)
    if work is not None:
        roles[work] = StationRole.WORK
    return roles
