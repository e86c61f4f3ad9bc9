# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""General statistical mobility features of a user.

All functions work on the visits of one user, given as the station id
of every record, and look up station coordinates in a mapping. Entropies
use the natural logarithm.
"""

from __future__ import annotations

__all__ = [
    "FEATURE_COLUMNS",
    "EmptyHistoryError",
    "GeneralFeatures",
    "NormalizationStats",
    "activity_entropy",
    "assemble_general_vector",
    "compute_general_features",
    "k_radius_of_gyration",
    "load_general_features",
    "num_distinct_stations",
    "radius_of_gyration",
    "raw_vector",
    "travel_diversity",
    "vector_names",
    "write_general_features",
]

import collections
import collections.abc as cabc
import dataclasses
import logging
import math
import os
import typing as t

import numpy as np
import pandas as pd

from smartses import helpers
from smartses.config import FeatureConfig
from smartses.ingest import UserHistory

LOGGER = logging.getLogger(__name__)

FEATURE_COLUMNS = (
    "card_id",
    "f_rg",
    "f_krg",
    "returner",
    "f_nds",
    "f_ae",
    "f_td",
)

Coords = cabc.Mapping[int, helpers.LatLon]


class EmptyHistoryError(ValueError):
    """Raised if a feature needs at least one record, but got none."""


def _points(visits: cabc.Sequence[int], coords: Coords) -> np.ndarray:
    if not len(visits):
        raise EmptyHistoryError("Cannot compute features without records")
    return np.asarray([coords[s] for s in visits], dtype=np.float64)


def _distances(points: np.ndarray, center: helpers.LatLon) -> np.ndarray:
    return np.asarray(
        helpers.haversine_km(points[:, 0], points[:, 1], *center),
        dtype=np.float64,
    )


def radius_of_gyration(
    visits: cabc.Sequence[int], coords: Coords, *, rms: bool = False
) -> float:
    """Mean distance of all records to their centroid, in km.

    Parameters
    ----------
    visits
        The station id of every record of the user.
    coords
        Station coordinates.
    rms
        Return the root of the mean squared distance instead, which is
        the conventional definition.

    Raises
    ------
    EmptyHistoryError
        If there are no visits.
    """
    points = _points(visits, coords)
    dist = _distances(points, helpers.centroid(points))
    if rms:
        return math.sqrt(float(np.mean(dist**2)))
    return float(np.mean(dist))


def k_radius_of_gyration(
    visits: cabc.Sequence[int],
    coords: Coords,
    k: int = 2,
    *,
    rms: bool = False,
    topk_centroid: bool = False,
) -> tuple[float, bool]:
    """Radius of gyration restricted to the ``k`` most visited stations.

    Each of the top stations contributes its distance to the centroid,
    weighted by its number of visits. The centroid is the one of all
    records, unless ``topk_centroid`` is set. Ties at the cut are broken
    in favour of the smaller station id; with fewer than ``k`` distinct
    stations, all of them are used.

    Returns
    -------
    float
        The k-radius of gyration in km.
    bool
        Whether the user is a k-returner, i.e. whether the k-radius is
        at least half of the full radius of gyration.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    points = _points(visits, coords)
    counts = collections.Counter(visits)
    top = sorted(counts, key=lambda s: (-counts[s], s))[:k]
    weights = np.asarray([counts[s] for s in top], dtype=np.float64)
    top_points = np.asarray([coords[s] for s in top], dtype=np.float64)

    if topk_centroid:
        lat, lon = weights @ top_points / weights.sum()
        center = float(lat), float(lon)
    else:
        center = helpers.centroid(points)
    dist = _distances(top_points, center)
    if rms:
        krg = math.sqrt(float(np.sum(weights * dist**2) / weights.sum()))
    else:
        krg = float(np.sum(weights * dist) / weights.sum())
    rg = radius_of_gyration(visits, coords, rms=rms)
    return krg, krg >= rg / 2


def num_distinct_stations(visits: cabc.Iterable[int]) -> int:
    """Count the different stations a user visited."""
    return len(set(visits))


def activity_entropy(visits: cabc.Sequence[int]) -> float:
    """Shannon entropy of the station visit shares.

    Raises
    ------
    EmptyHistoryError
        If there are no visits.
    """
    if not len(visits):
        raise EmptyHistoryError("Cannot compute entropy without records")
    return helpers.entropy(list(collections.Counter(visits).values()))


def travel_diversity(trips: cabc.Iterable[tuple[int, int]]) -> float:
    """Shannon entropy of the undirected origin-destination pair shares.

    Trips ``A -> B`` and ``B -> A`` count as the same pair. Zero trips
    yield 0.
    """
    pairs = collections.Counter((min(o, d), max(o, d)) for o, d in trips)
    if not pairs:
        return 0.0
    return helpers.entropy(list(pairs.values()))


@dataclasses.dataclass(frozen=True)
class GeneralFeatures:
    f_rg: float
    """Radius of gyration, km."""
    f_krg: float
    """k-radius of gyration, km."""
    returner: bool
    f_nds: int
    """Number of distinct stations."""
    f_ae: float
    """Activity entropy, nats."""
    f_td: float
    """Travel diversity, nats."""

    def __post_init__(self) -> None:
        for name in ("f_rg", "f_krg", "f_ae", "f_td"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"Invalid {name}: {value}")
        if self.f_nds < 0:
            raise ValueError(f"Invalid f_nds: {self.f_nds}")


def compute_general_features(
    history: UserHistory,
    coords: Coords,
    config: FeatureConfig | None = None,
) -> GeneralFeatures:
    """Compute all general features of one user."""
    config = config or FeatureConfig()
    visits = [r.station_id for r in history.records]
    f_krg, returner = k_radius_of_gyration(
        visits,
        coords,
        config.k,
        rms=config.rms_rg,
        topk_centroid=config.topk_centroid,
    )
    if not history.trips:
        LOGGER.debug("User %s has no trips, F_td is 0", history.card_id)
    return GeneralFeatures(
        f_rg=radius_of_gyration(visits, coords, rms=config.rms_rg),
        f_krg=f_krg,
        returner=returner,
        f_nds=num_distinct_stations(visits),
        f_ae=activity_entropy(visits),
        f_td=travel_diversity(
            (trip.board_station, trip.alight_station)
            for trip in history.trips
        ),
    )


def vector_names(config: FeatureConfig) -> tuple[str, ...]:
    """Names of the components of the general vector, in order."""
    names = ["f_rg", "f_krg", "f_nds", "f_ae"]
    if config.include_td:
        names.append("f_td")
    if config.include_returner_flag:
        names.append("returner")
    return tuple(names)


def raw_vector(
    features: GeneralFeatures, config: FeatureConfig
) -> np.ndarray:
    """Lay out the features as an un-normalized vector."""
    return np.asarray(
        [float(getattr(features, n)) for n in vector_names(config)],
        dtype=np.float64,
    )


@dataclasses.dataclass(frozen=True)
class NormalizationStats:
    """Per-component mean and standard deviation of the general vector."""

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(
        cls, vectors: np.ndarray, names: cabc.Sequence[str]
    ) -> NormalizationStats:
        """Fit the statistics on the rows of ``vectors``.

        Only the training split must be passed here.
        """
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != len(names):
            raise ValueError(
                f"Expected {len(names)} columns, got shape {vectors.shape}"
            )
        if not len(vectors):
            raise ValueError("Cannot fit normalization on zero rows")
        return cls(tuple(names), vectors.mean(axis=0), vectors.std(axis=0))

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        """Z-score the vectors; zero-variance components become 0."""
        vectors = np.asarray(vectors, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (vectors - self.mean) / safe, 0.0)

    def denormalize(self, vectors: np.ndarray) -> np.ndarray:
        """Invert :meth:`transform`."""
        return np.asarray(vectors, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict[str, t.Any]:
        return {
            "names": list(self.names),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: cabc.Mapping[str, t.Any]) -> NormalizationStats:
        return cls(
            tuple(data["names"]),
            np.asarray(data["mean"], dtype=np.float64),
            np.asarray(data["std"], dtype=np.float64),
        )


def assemble_general_vector(
    features: GeneralFeatures,
    stats: NormalizationStats,
    config: FeatureConfig,
) -> np.ndarray:
    """Build the normalized general vector of one user."""
    if stats.names != vector_names(config):
        raise ValueError(
            f"Normalization was fitted on {stats.names},"
            f" but the layout is {vector_names(config)}"
        )
    return stats.transform(raw_vector(features, config))


def write_general_features(
    features: cabc.Mapping[str, GeneralFeatures],
    path: str | os.PathLike[str],
) -> None:
    """Write the raw, un-normalized features of all users."""
    frame = pd.DataFrame(
        [
            (
                card_id,
                repr(f.f_rg),
                repr(f.f_krg),
                int(f.returner),
                f.f_nds,
                repr(f.f_ae),
                repr(f.f_td),
            )
            for card_id, f in features.items()
        ],
        columns=list(FEATURE_COLUMNS),
    )
    with helpers.atomic_write(path, newline="") as file:
        frame.to_csv(file, index=False, lineterminator="\n")


def load_general_features(
    path: str | os.PathLike[str],
) -> dict[str, GeneralFeatures]:
    frame = pd.read_csv(
        path,
        dtype={"card_id": str, "returner": "int64", "f_nds": "int64"},
        float_precision="round_trip",
        keep_default_na=False,
    )
    missing = set(FEATURE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(
            f"Feature file {path} lacks columns: {sorted(missing)}"
        )
    return {
        r.card_id: GeneralFeatures(
            float(r.f_rg),
            float(r.f_krg),
            bool(r.returner),
            int(r.f_nds),
            float(r.f_ae),
            float(r.f_td),
        )
        for r in frame.itertuples(index=False)
    }
