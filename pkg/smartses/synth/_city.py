# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "COMMUNITIES_FILE",
    "POIS_FILE",
    "STATIONS_FILE",
    "City",
    "InfeasibleCityError",
    "apportion",
    "generate_city",
    "km_to_latlon",
    "write_city",
]

import collections.abc as cabc
import dataclasses
import logging
import math
import os
import pathlib

import numpy as np
import pandas as pd

from smartses import helpers
from smartses.config import CityConfig
from smartses.context import COMMUNITY_COLUMNS, POI_COLUMNS, Community, Poi
from smartses.ingest import Station, StationRegistry
from smartses.modeltypes import PoiCategory, SESLevel, StationFunction

LOGGER = logging.getLogger(__name__)

KM_PER_DEGREE = 2 * math.pi * helpers.EARTH_RADIUS_KM / 360
STATIONS_FILE = "stations.csv"
COMMUNITIES_FILE = "communities.csv"
POIS_FILE = "pois.csv"

_FUNCTIONS = (
    StationFunction.RESIDENTIAL,
    StationFunction.ENTERTAINMENT,
    StationFunction.WORK,
)
_POI_MIX: dict[StationFunction, dict[PoiCategory, float]] = {
    StationFunction.RESIDENTIAL: {
        PoiCategory.BUSINESS_RESIDENCE: 0.75,
        PoiCategory.DOMESTIC_SERVICES: 0.1,
        PoiCategory.EDUCATION: 0.1,
        PoiCategory.HOSPITAL: 0.05,
    },
    StationFunction.WORK: {
        PoiCategory.FINANCIAL_SERVICES: 0.5,
        PoiCategory.BUSINESS_RESIDENCE: 0.25,
        PoiCategory.PUBLIC_FACILITY: 0.15,
        PoiCategory.PUBLIC_TRANSPORTATION: 0.1,
    },
    StationFunction.ENTERTAINMENT: {
        PoiCategory.SPORT_LEISURE: 0.3,
        PoiCategory.SCENERY: 0.2,
        PoiCategory.RESTAURANT: 0.35,
        PoiCategory.HOTEL: 0.15,
    },
}


class InfeasibleCityError(ValueError):
    """Raised if the configured city cannot be laid out."""


@dataclasses.dataclass(frozen=True, eq=False)
class City:
    """A synthetic city and its hidden ground truth."""

    registry: StationRegistry
    functions: dict[int, StationFunction]
    """The planted function of every station."""
    tiers: dict[int, SESLevel]
    """The price tier of every residential station."""
    communities: list[Community]
    pois: list[Poi]

    def stations_with(self, function: StationFunction) -> list[int]:
        return [i for i, f in self.functions.items() if f is function]

    def stations_in_tier(self, tier: SESLevel) -> list[int]:
        return [i for i, s in self.tiers.items() if s is tier]


def apportion(shares: cabc.Sequence[float], total: int) -> list[int]:
    """Split ``total`` into integer counts proportional to ``shares``.

    Uses the largest remainder method; ties in the remainders go to the
    earlier share.
    """
    exact = [s * total for s in shares]
    counts = [math.floor(e) for e in exact]
    remainders = sorted(
        range(len(shares)), key=lambda i: (-(exact[i] - counts[i]), i)
    )
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def km_to_latlon(
    center: helpers.LatLon, east_km: float, north_km: float
) -> helpers.LatLon:
    """Offset a point by local east/north distances."""
    lat = center[0] + north_km / KM_PER_DEGREE
    lon = center[1] + east_km / (
        KM_PER_DEGREE * math.cos(math.radians(center[0]))
    )
    return float(lat), float(lon)


def _grid(config: CityConfig, rng: np.random.Generator) -> np.ndarray:
    cols = math.ceil(math.sqrt(config.n_stations))
    rows = math.ceil(config.n_stations / cols)
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    cells = cells[: config.n_stations]
    xy = np.asarray(
        [(c - (cols - 1) / 2, r - (rows - 1) / 2) for r, c in cells],
        dtype=np.float64,
    )
    xy *= config.spacing_km
    xy += rng.uniform(-config.jitter_km, config.jitter_km, size=xy.shape)
    return xy


def _scatter(
    rng: np.random.Generator, radius_km: float
) -> tuple[float, float]:
    angle = rng.uniform(0, 2 * math.pi)
    dist = radius_km * math.sqrt(rng.uniform(0, 1))
    return dist * math.cos(angle), dist * math.sin(angle)


def generate_city(config: CityConfig, seed: int) -> City:
    """Lay out stations, housing communities and POIs.

    Stations sit on a jittered grid around the configured center. Work
    and entertainment stations take the inner part of the grid, the
    residential stations the outer part; among those, the innermost
    third gets the high price tier and the outermost third the low one.
    Communities are scattered around residential stations only.

    Raises
    ------
    InfeasibleCityError
        If the function mix leaves a function with fewer than two
        stations, or if there are too few residential stations to give
        every price tier one.
    """
    counts = apportion(config.function_mix, config.n_stations)
    for function, count in zip(_FUNCTIONS, counts, strict=True):
        if count < 2:
            raise InfeasibleCityError(
                f"Function mix gives only {count} {function} stations,"
                " need at least 2"
            )
    n_res, n_ent, n_work = counts
    if n_res < len(SESLevel):
        raise InfeasibleCityError(
            f"Need at least {len(SESLevel)} residential stations"
        )

    rng = np.random.default_rng(seed)
    xy = _grid(config, rng)
    by_distance = np.argsort(np.hypot(xy[:, 0], xy[:, 1]), kind="stable")
    inner = rng.permutation(by_distance[: n_ent + n_work])
    outer = by_distance[n_ent + n_work :]

    stations = []
    for i, (east, north) in enumerate(xy):
        lat, lon = km_to_latlon(config.center, east, north)
        stations.append(Station(i + 1, f"Station {i + 1:03d}", lat, lon))
    registry = StationRegistry(stations)

    functions: dict[int, StationFunction] = {}
    for i in inner[:n_work]:
        functions[int(i) + 1] = StationFunction.WORK
    for i in inner[n_work:]:
        functions[int(i) + 1] = StationFunction.ENTERTAINMENT
    tiers: dict[int, SESLevel] = {}
    tier_counts = apportion([1 / 3] * 3, n_res)
    tier_order = (SESLevel.HIGH, SESLevel.MIDDLE, SESLevel.LOW)
    start = 0
    for tier, count in zip(tier_order, tier_counts, strict=True):
        for i in outer[start : start + count]:
            functions[int(i) + 1] = StationFunction.RESIDENTIAL
            tiers[int(i) + 1] = tier
        start += count
    functions = dict(sorted(functions.items()))
    tiers = dict(sorted(tiers.items()))

    communities = []
    for station_id, tier in tiers.items():
        low, high = config.price_tiers[tier.code]
        for j in range(config.communities_per_station):
            east, north = _scatter(rng, config.community_radius_km)
            lat, lon = km_to_latlon(registry.coords(station_id), east, north)
            price = float(round(rng.uniform(low, high)))
            communities.append(
                Community(f"C{station_id:03d}-{j}", lat, lon, price)
            )

    pois = []
    for station_id, function in functions.items():
        mix = _POI_MIX[function]
        categories = list(mix)
        weights = np.asarray(list(mix.values()))
        for j in range(config.pois_per_station):
            category = categories[rng.choice(len(categories), p=weights)]
            east, north = _scatter(rng, 0.5)
            lat, lon = km_to_latlon(registry.coords(station_id), east, north)
            pois.append(Poi(f"P{station_id:03d}-{j}", lat, lon, category))

    LOGGER.info(
        "Generated city with %d residential, %d entertainment"
        " and %d work stations",
        n_res,
        n_ent,
        n_work,
    )
    return City(registry, functions, tiers, communities, pois)


def write_city(city: City, directory: str | os.PathLike[str]) -> None:
    """Write the station registry, communities and POIs of a city."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    city.registry.save(directory / STATIONS_FILE)
    frames = {
        COMMUNITIES_FILE: pd.DataFrame(
            [
                (c.community_id, repr(c.lat), repr(c.lon), repr(c.avg_price))
                for c in city.communities
            ],
            columns=list(COMMUNITY_COLUMNS),
        ),
        POIS_FILE: pd.DataFrame(
            [
                (p.poi_id, repr(p.lat), repr(p.lon), str(p.category))
                for p in city.pois
            ],
            columns=list(POI_COLUMNS),
        ),
    }
    for name, frame in frames.items():
        with helpers.atomic_write(directory / name, newline="") as file:
            frame.to_csv(file, index=False, lineterminator="\n")
