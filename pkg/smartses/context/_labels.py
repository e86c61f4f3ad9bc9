# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Housing prices, station profiles and SES ground-truth labels."""

from __future__ import annotations

__all__ = [
    "COMMUNITY_COLUMNS",
    "LABEL_COLUMNS",
    "PROFILE_COLUMNS",
    "Community",
    "LabelResult",
    "StationProfile",
    "Thresholds",
    "UserLabel",
    "build_station_profiles",
    "calibrate_thresholds",
    "label_ses",
    "label_users",
    "load_communities",
    "load_labels",
    "load_station_profiles",
    "price_index_near",
    "rank_labels",
    "write_labels",
    "write_station_profiles",
]

import collections.abc as cabc
import dataclasses
import logging
import math
import os
import typing as t

import numpy as np
import pandas as pd

from smartses import helpers
from smartses.config import ContextConfig
from smartses.ingest import StationRegistry, UserHistory
from smartses.modeltypes import PoiCategory, SESLevel, StationFunction

from ._function import build_flow_profiles, classify_station_function
from ._roles import (
    UnlabelableUserError,
    infer_home_station,
    infer_work_station,
)

LOGGER = logging.getLogger(__name__)

COMMUNITY_COLUMNS = ("community_id", "lat", "lon", "avg_price_cny_per_m2")
LABEL_COLUMNS = ("card_id", "home_station_id", "home_price", "ses")
PROFILE_COLUMNS = (
    "station_id",
    "lat",
    "lon",
    "function",
    "price_index",
    "low_confidence",
)
PRICE_BAND = (1000.0, 500000.0)


class Community(t.NamedTuple):
    community_id: str
    lat: float
    lon: float
    avg_price: float
    """Average housing price in CNY/m²."""


def load_communities(path: str | os.PathLike[str]) -> list[Community]:
    """Load a communities file.

    Raises
    ------
    ValueError
        If a column is missing or a price lies outside the sanity band
        of 1,000 to 500,000 CNY/m².
    """
    frame = pd.read_csv(
        path,
        dtype={"community_id": str},
        float_precision="round_trip",
        keep_default_na=False,
    )
    missing = set(COMMUNITY_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(
            f"Communities file {path} lacks columns: {sorted(missing)}"
        )
    communities = []
    for row in frame.itertuples(index=False):
        price = float(row.avg_price_cny_per_m2)
        if not PRICE_BAND[0] <= price <= PRICE_BAND[1]:
            raise ValueError(
                f"Price of community {row.community_id} out of range: {price}"
            )
        communities.append(
            Community(row.community_id, float(row.lat), float(row.lon), price)
        )
    return communities


def price_index_near(
    coords: helpers.LatLon,
    communities: cabc.Sequence[Community],
    radius_km: float = 2.0,
) -> float | None:
    """Average the prices of all communities within ``radius_km``.

    Distances are straight-line great-circle distances. Returns None if
    no community is close enough.
    """
    if radius_km <= 0:
        raise ValueError(f"radius_km must be positive, got {radius_km}")
    if not communities:
        return None
    table = np.asarray(
        [(c.lat, c.lon, c.avg_price) for c in communities], dtype=np.float64
    )
    dist = helpers.haversine_km(
        coords[0], coords[1], table[:, 0], table[:, 1]
    )
    near = table[dist <= radius_km, 2]
    if not len(near):
        return None
    return float(near.mean())


class Thresholds(t.NamedTuple):
    """The price boundaries between the SES classes."""

    t_low: float
    t_high: float


def _boundary(prices: np.ndarray, k: int) -> float:
    """Price that has exactly ``k`` of the sorted prices below it."""
    if k <= 0:
        return float(prices[0])
    if k >= len(prices):
        return math.nextafter(float(prices[-1]), math.inf)
    return float((prices[k - 1] + prices[k]) / 2)


def calibrate_thresholds(
    prices: cabc.Iterable[float],
    shares: tuple[float, float, float] = (0.444, 0.362, 0.194),
    *,
    mode: t.Literal["fixed", "quantile"] = "fixed",
    t_high: float = 70000.0,
) -> Thresholds:
    """Derive the class boundaries from the labeled population.

    In ``fixed`` mode, the high boundary stays fixed at ``t_high`` and
    only the low boundary is placed at the quantile of the low-class
    share. In ``quantile`` mode both boundaries follow the shares.
    Boundaries are placed halfway between neighbouring prices.

    Raises
    ------
    ValueError
        If there are no prices, or if the calibrated low boundary ends up
        above the high boundary.
    """
    arr = np.sort(np.asarray(list(prices), dtype=np.float64))
    if not len(arr):
        raise ValueError("Cannot calibrate thresholds without prices")
    n = len(arr)
    t_low = _boundary(arr, round(shares[0] * n))
    if mode == "quantile":
        t_high = _boundary(arr, n - round(shares[2] * n))
    elif mode != "fixed":
        raise ValueError(f"Unknown threshold mode: {mode!r}")
    if t_low > t_high:
        raise ValueError(
            f"Calibrated low boundary {t_low:.1f} lies above {t_high:.1f}"
        )
    return Thresholds(t_low, t_high)


def label_ses(price: float | None, thresholds: Thresholds) -> SESLevel:
    """Map a home price to an SES class.

    Raises
    ------
    UnlabelableUserError
        If there is no price.
    """
    if price is None:
        raise UnlabelableUserError("No housing price near the home station")
    if thresholds.t_low > thresholds.t_high:
        raise ValueError("t_low must not lie above t_high")
    if price > thresholds.t_high:
        return SESLevel.HIGH
    if price < thresholds.t_low:
        return SESLevel.LOW
    return SESLevel.MIDDLE


def rank_labels(
    prices: cabc.Sequence[float],
    keys: cabc.Sequence[str],
    shares: tuple[float, float, float],
) -> list[SESLevel]:
    """Label by price rank so that class sizes match ``shares``.

    Users are ordered by price, then by key. The cheapest
    ``round(shares[0] * n)`` become low, the most expensive
    ``round(shares[2] * n)`` become high. Users with equal prices on a
    class boundary are split by key.
    """
    n = len(prices)
    n_low = round(shares[0] * n)
    n_high = min(round(shares[2] * n), n - n_low)
    order = sorted(range(n), key=lambda i: (prices[i], keys[i]))
    labels = [SESLevel.MIDDLE] * n
    for rank, i in enumerate(order):
        if rank < n_low:
            labels[i] = SESLevel.LOW
        elif rank >= n - n_high:
            labels[i] = SESLevel.HIGH
    return labels


@dataclasses.dataclass(frozen=True)
class StationProfile:
    """Context of one station, shared by all users."""

    station_id: int
    lat: float
    lon: float
    function: StationFunction
    price_index: float | None = None
    low_confidence: bool = False

    def __post_init__(self) -> None:
        if self.function is StationFunction.TRANSFER:
            raise ValueError("A station cannot have the transfer function")
        if self.price_index is not None and self.price_index <= 0:
            raise ValueError(f"Invalid price index: {self.price_index}")


def build_station_profiles(
    histories: cabc.Iterable[UserHistory],
    registry: StationRegistry,
    communities: cabc.Sequence[Community],
    poi_mix: cabc.Mapping[int, cabc.Mapping[PoiCategory, int]],
    config: ContextConfig,
) -> dict[int, StationProfile]:
    """Classify every registered station and attach its price index."""
    trips = (trip for h in histories for trip in h.trips)
    flows = build_flow_profiles(trips, registry)
    profiles = {}
    for station in registry.values():
        function, low_confidence = classify_station_function(
            flows[station.station_id],
            poi_mix.get(station.station_id, {}),
            theta_r=config.theta_r,
            theta_e=config.theta_e,
        )
        if low_confidence:
            LOGGER.debug(
                "Station %d classified as %s without any signal",
                station.station_id,
                function,
            )
        profiles[station.station_id] = StationProfile(
            station.station_id,
            station.lat,
            station.lon,
            function,
            price_index_near(
                (station.lat, station.lon), communities, config.radius_km
            ),
            low_confidence,
        )
    return profiles


@dataclasses.dataclass(frozen=True)
class UserLabel:
    card_id: str
    home_station: int
    ses: SESLevel
    home_price: float
    work_station: int | None = None


@dataclasses.dataclass(frozen=True)
class LabelResult:
    labels: list[UserLabel]
    thresholds: Thresholds
    dropped: dict[str, str] = dataclasses.field(default_factory=dict)
    """Reasons why users could not be labeled, by card id."""

    def shares(self) -> dict[SESLevel, float]:
        counts = dict.fromkeys(SESLevel, 0)
        for label in self.labels:
            counts[label.ses] += 1
        return helpers.shares(counts)


def label_users(
    histories: cabc.Iterable[UserHistory],
    profiles: cabc.Mapping[int, StationProfile],
    config: ContextConfig,
) -> LabelResult:
    """Infer home and work stations and assign each user an SES class.

    Users without any boarding, and users without a community near their
    home station, are dropped and reported.

    In ``fixed`` mode, a configured ``t_low`` is used as is, otherwise it
    is calibrated. In ``quantile`` mode the classes are assigned by price
    rank, so that the class sizes match the configured shares to within
    one user; the reported thresholds are the calibrated midpoints.
    """
    dropped: dict[str, str] = {}
    homes: list[tuple[UserHistory, int, float]] = []
    for history in histories:
        try:
            home = infer_home_station(history)
        except UnlabelableUserError as err:
            dropped[history.card_id] = str(err)
            continue
        price = profiles[home].price_index
        if price is None:
            dropped[history.card_id] = (
                f"No community within {config.radius_km} km of station {home}"
            )
            continue
        homes.append((history, home, price))
    if dropped:
        LOGGER.warning("Dropped %d unlabelable users", len(dropped))
    if not homes:
        raise UnlabelableUserError("None of the users could be labeled")

    prices = [p for _, _, p in homes]
    if config.threshold_mode == "quantile":
        thresholds = calibrate_thresholds(
            prices, config.class_shares, mode="quantile"
        )
        levels = rank_labels(
            prices, [h.card_id for h, _, _ in homes], config.class_shares
        )
    else:
        assert config.t_high is not None
        if config.t_low is not None:
            thresholds = Thresholds(config.t_low, config.t_high)
        else:
            thresholds = calibrate_thresholds(
                prices,
                config.class_shares,
                mode="fixed",
                t_high=config.t_high,
            )
        levels = [label_ses(p, thresholds) for p in prices]
    LOGGER.info("SES thresholds: low < %.1f, high > %.1f", *thresholds)

    labels = [
        UserLabel(
            history.card_id,
            home,
            level,
            price,
            infer_work_station(
                history, home, min_visits=config.work_min_visits
            ),
        )
        for (history, home, price), level in zip(homes, levels, strict=True)
    ]
    return LabelResult(labels, thresholds, dropped)


def write_labels(
    labels: cabc.Iterable[UserLabel], path: str | os.PathLike[str]
) -> None:
    frame = pd.DataFrame(
        [
            (lb.card_id, lb.home_station, repr(lb.home_price), str(lb.ses))
            for lb in labels
        ],
        columns=list(LABEL_COLUMNS),
    )
    with helpers.atomic_write(path, newline="") as file:
        frame.to_csv(file, index=False, lineterminator="\n")


def load_labels(path: str | os.PathLike[str]) -> list[UserLabel]:
    """Load a labels file written by :func:`write_labels`."""
    frame = pd.read_csv(
        path,
        dtype={"card_id": str, "home_station_id": "int64", "ses": str},
        keep_default_na=False,
    )
    missing = set(LABEL_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(
            f"Labels file {path} lacks columns: {sorted(missing)}"
        )
    return [
        UserLabel(
            r.card_id,
            int(r.home_station_id),
            SESLevel.parse(r.ses),
            float(r.home_price),
        )
        for r in frame.itertuples(index=False)
    ]


def write_station_profiles(
    profiles: cabc.Mapping[int, StationProfile],
    path: str | os.PathLike[str],
) -> None:
    frame = pd.DataFrame(
        [
            (
                p.station_id,
                repr(p.lat),
                repr(p.lon),
                str(p.function),
                "" if p.price_index is None else repr(p.price_index),
                int(p.low_confidence),
            )
            for p in profiles.values()
        ],
        columns=list(PROFILE_COLUMNS),
    )
    with helpers.atomic_write(path, newline="") as file:
        frame.to_csv(file, index=False, lineterminator="\n")


def load_station_profiles(
    path: str | os.PathLike[str],
) -> dict[int, StationProfile]:
    frame = pd.read_csv(
        path,
        dtype={"station_id": "int64", "function": str, "price_index": str},
        keep_default_na=False,
    )
    missing = set(PROFILE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(
            f"Station profile file {path} lacks columns: {sorted(missing)}"
        )
    return {
        int(r.station_id): StationProfile(
            int(r.station_id),
            float(r.lat),
            float(r.lon),
            StationFunction.parse(r.function),
            float(r.price_index) if r.price_index else None,
            bool(int(r.low_confidence)),
        )
        for r in frame.itertuples(index=False)
    }
