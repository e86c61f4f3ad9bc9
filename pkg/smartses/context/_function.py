# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Station traffic profiles, points of interest and station functions."""

from __future__ import annotations

__all__ = [
    "POI_COLUMNS",
    "FlowProfile",
    "Poi",
    "attach_pois",
    "build_flow_profiles",
    "classify_station_function",
    "load_pois",
    "station_flow_profile",
]

import collections
import collections.abc as cabc
import dataclasses
import logging
import os
import typing as t

import numpy as np
import pandas as pd

from smartses import helpers
from smartses.ingest import StationRegistry, Trip
from smartses.modeltypes import LEISURE_POIS, PoiCategory, StationFunction

LOGGER = logging.getLogger(__name__)

POI_COLUMNS = ("poi_id", "lat", "lon", "category")
MORNING_HOURS = slice(6, 10)
EVENING_HOURS = slice(17, 21)

_WORK_POIS = frozenset({PoiCategory.FINANCIAL_SERVICES})


@dataclasses.dataclass(frozen=True)
class FlowProfile:
    """Hourly boarding and alighting counts of one station.

    The counts are stored as one ``(2, 2, 24)`` array, indexed by day
    type (weekday, weekend), direction (board, alight) and hour.
    """

    station_id: int
    counts: np.ndarray = dataclasses.field(
        default_factory=lambda: np.zeros((2, 2, 24), dtype=np.int64),
        repr=False,
    )

    @property
    def weekday_board(self) -> np.ndarray:
        return self.counts[0, 0]

    @property
    def weekday_alight(self) -> np.ndarray:
        return self.counts[0, 1]

    @property
    def weekend_board(self) -> np.ndarray:
        return self.counts[1, 0]

    @property
    def weekend_alight(self) -> np.ndarray:
        return self.counts[1, 1]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def weekend_share(self) -> float:
        total = self.total
        return float(self.counts[1].sum()) / total if total else 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlowProfile):
            return NotImplemented
        return self.station_id == other.station_id and bool(
            np.array_equal(self.counts, other.counts)
        )

    __hash__ = None  # type: ignore[assignment]


def _add_leg(
    counts: np.ndarray, weekday: int, direction: int, seconds: int
) -> None:
    counts[int(weekday >= 5), direction, seconds // 3600] += 1


def build_flow_profiles(
    trips: cabc.Iterable[Trip],
    station_ids: cabc.Iterable[int] = (),
) -> dict[int, FlowProfile]:
    """Build the flow profiles of all stations in one pass over the trips.

    Parameters
    ----------
    trips
        The reconstructed trips of all users.
    station_ids
        Stations that get a profile even if no trip touches them.

    Returns
    -------
    dict[int, FlowProfile]
        The profiles, keyed and ordered by station id.
    """
    profiles: dict[int, FlowProfile] = {
        i: FlowProfile(i) for i in station_ids
    }
    for trip in trips:
        weekday = trip.date.weekday()
        for station, direction, seconds in (
            (trip.board_station, 0, trip.board_time),
            (trip.alight_station, 1, trip.alight_time),
        ):
            if station not in profiles:
                profiles[station] = FlowProfile(station)
            _add_leg(profiles[station].counts, weekday, direction, seconds)
    return dict(sorted(profiles.items()))


def station_flow_profile(
    trips: cabc.Iterable[Trip], station_id: int
) -> FlowProfile:
    """Build the flow profile of a single station.

    A station without any traffic gets an all-zero profile.
    """
    profile = FlowProfile(station_id)
    for trip in trips:
        weekday = trip.date.weekday()
        if trip.board_station == station_id:
            _add_leg(profile.counts, weekday, 0, trip.board_time)
        if trip.alight_station == station_id:
            _add_leg(profile.counts, weekday, 1, trip.alight_time)
    return profile


class Poi(t.NamedTuple):
    poi_id: str
    lat: float
    lon: float
    category: PoiCategory


def load_pois(path: str | os.PathLike[str]) -> list[Poi]:
    """Load a POI file with ``poi_id,lat,lon,category`` columns."""
    frame = pd.read_csv(
        path,
        dtype={"poi_id": str},
        float_precision="round_trip",
        keep_default_na=False,
    )
    missing = set(POI_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"POI file {path} lacks columns: {sorted(missing)}")
    return [
        Poi(
            r.poi_id,
            float(r.lat),
            float(r.lon),
            PoiCategory.parse(r.category),
        )
        for r in frame.itertuples(index=False)
    ]


def attach_pois(
    pois: cabc.Iterable[Poi],
    registry: StationRegistry,
    radius_km: float = 1.0,
) -> dict[int, collections.Counter[PoiCategory]]:
    """Count the POI categories around each station.

    Every POI is attached to its nearest station, but only if that
    station is within ``radius_km``. Stations without any POI map to an
    empty counter.
    """
    station_ids = list(registry)
    coords = registry.coord_array(station_ids)
    mix: dict[int, collections.Counter[PoiCategory]] = {
        i: collections.Counter() for i in station_ids
    }
    dropped = 0
    for poi in pois:
        dist = helpers.haversine_km(
            poi.lat, poi.lon, coords[:, 0], coords[:, 1]
        )
        nearest = int(np.argmin(dist))
        if dist[nearest] <= radius_km:
            mix[station_ids[nearest]][poi.category] += 1
        else:
            dropped += 1
    if dropped:
        LOGGER.info(
            "%d POIs are farther than %s km from any station",
            dropped,
            radius_km,
        )
    return mix


def _poi_scores(
    poi_mix: cabc.Mapping[PoiCategory, int],
) -> tuple[float, float, float]:
    residential = 0.5 * poi_mix.get(PoiCategory.BUSINESS_RESIDENCE, 0)
    work = residential + sum(poi_mix.get(c, 0) for c in _WORK_POIS)
    leisure = float(sum(poi_mix.get(c, 0) for c in LEISURE_POIS))
    return residential, work, leisure


def classify_station_function(
    profile: FlowProfile,
    poi_mix: cabc.Mapping[PoiCategory, int],
    *,
    theta_r: float = 1.5,
    theta_e: float = 0.35,
) -> tuple[StationFunction, bool]:
    """Classify what a station is used for by most citizens.

    The weekday rush hours decide first: a station that people mostly
    leave in the morning (06:00 to 10:00) and mostly return to in the
    evening (17:00 to 21:00), each by a ratio of at least ``theta_r``,
    is residential; the mirrored pattern means work. Otherwise a weekend
    traffic share of at least ``theta_e``, or a plurality of leisure
    POIs, makes it an entertainment station. Remaining stations follow
    their dominant POI group.

    Returns
    -------
    StationFunction
        The function class.
    bool
        Whether the decision is low-confidence, which is the case if
        neither the traffic nor the POIs carried any signal.
    """
    mb = profile.weekday_board[MORNING_HOURS].sum()
    ma = profile.weekday_alight[MORNING_HOURS].sum()
    eb = profile.weekday_board[EVENING_HOURS].sum()
    ea = profile.weekday_alight[EVENING_HOURS].sum()
    if mb > 0 and ea > 0 and mb >= theta_r * ma and ea >= theta_r * eb:
        return StationFunction.RESIDENTIAL, False
    if ma > 0 and eb > 0 and ma >= theta_r * mb and eb >= theta_r * ea:
        return StationFunction.WORK, False

    if profile.total and profile.weekend_share >= theta_e:
        return StationFunction.ENTERTAINMENT, False
    residential, work, leisure = _poi_scores(poi_mix)
    if leisure > 0 and leisure > max(residential, work):
        return StationFunction.ENTERTAINMENT, False

    total_pois = sum(poi_mix.values())
    if not total_pois:
        return StationFunction.RESIDENTIAL, True
    other = total_pois - 2 * residential - sum(
        poi_mix.get(c, 0) for c in _WORK_POIS
    )
    best = max(residential, work, other)
    if residential == best:
        return StationFunction.RESIDENTIAL, False
    if work == best:
        return StationFunction.WORK, False
    return StationFunction.ENTERTAINMENT, False
