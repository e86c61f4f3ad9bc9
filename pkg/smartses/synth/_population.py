# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "MANIFEST_COLUMNS",
    "Agent",
    "OracleEntry",
    "archetype",
    "generate_population",
    "load_manifest",
    "oracle_manifest",
    "write_manifest",
]

import collections.abc as cabc
import dataclasses
import logging
import os
import typing as t

import numpy as np
import pandas as pd

from smartses import helpers
from smartses.config import PopulationConfig
from smartses.modeltypes import SESLevel, StationFunction

from ._city import City, apportion

LOGGER = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("card_id", "ses", "home_station_id", "work_station_id")
FIRST_CARD_ID = 1_000_000


@dataclasses.dataclass(frozen=True)
class Agent:
    """A simulated card holder and the lifestyle planted for them."""

    agent_id: str
    """The card id that the agent's records carry."""
    ses: SESLevel
    home: int
    work: int
    fun_stations: tuple[int, ...]
    """Preferred entertainment stations."""
    start_s: float
    """Mean departure time on working days, seconds since midnight."""
    work_hours: float
    part_time_rate: float
    evening_fun_rate: float
    weekend_active_rate: float
    weekend_work_rate: float
    weekend_fun_rate: float


class OracleEntry(t.NamedTuple):
    ses: SESLevel
    home: int
    work: int


def archetype(config: PopulationConfig, name: str, ses: SESLevel) -> float:
    """Look up a per-class parameter, scaled by the separation dial.

    The middle class value stays fixed; the other classes move away
    from it in proportion to ``separation``. Rates are clipped to
    ``[0, 1]``.
    """
    values = getattr(config, name)
    middle = values[SESLevel.MIDDLE.code]
    value = middle + config.separation * (values[ses.code] - middle)
    if name.endswith("_rate"):
        value = min(max(value, 0.0), 1.0)
    return float(value)


def _choose_work(
    city: City,
    home: int,
    bias: float,
    rng: np.random.Generator,
) -> int:
    candidates = city.stations_with(StationFunction.WORK)
    coords = city.registry.coord_array(candidates)
    lat, lon = city.registry.coords(home)
    dist = np.asarray(
        helpers.haversine_km(lat, lon, coords[:, 0], coords[:, 1])
    )
    spread = dist.std() or 1.0
    logits = bias * (dist - dist.mean()) / spread
    weights = np.exp(logits - logits.max())
    return candidates[rng.choice(len(candidates), p=weights / weights.sum())]


def generate_population(
    city: City, config: PopulationConfig, seed: int
) -> list[Agent]:
    """Draw the agents of a synthetic city.

    Class sizes follow ``config.class_shares`` exactly, rounded with the
    largest remainder method, and are then shuffled over the agents.
    Every agent lives at a residential station of the price tier that
    matches their class, and works at a work station chosen with the
    class' commute bias: positive values favour far stations.
    """
    rng = np.random.default_rng(seed)
    counts = apportion(config.class_shares, config.n_agents)
    classes = rng.permutation(np.repeat(np.arange(len(SESLevel)), counts))
    entertainment = city.stations_with(StationFunction.ENTERTAINMENT)

    agents = []
    for n, code in enumerate(classes):
        ses = SESLevel.from_code(int(code))
        homes = city.stations_in_tier(ses)
        home = homes[rng.choice(len(homes))]
        work = _choose_work(
            city, home, archetype(config, "commute_bias", ses), rng
        )
        n_fun = min(2, len(entertainment))
        fun = rng.choice(len(entertainment), size=n_fun, replace=False)
        start_h = rng.normal(
            archetype(config, "start_mean_h", ses), config.start_sd_h
        )
        agents.append(
            Agent(
                agent_id=str(FIRST_CARD_ID + n),
                ses=ses,
                home=home,
                work=work,
                fun_stations=tuple(entertainment[int(i)] for i in fun),
                start_s=min(max(start_h, 5.5), 11.0) * 3600,
                work_hours=archetype(config, "work_hours", ses),
                part_time_rate=archetype(config, "part_time_rate", ses),
                evening_fun_rate=archetype(config, "evening_fun_rate", ses),
                weekend_active_rate=archetype(
                    config, "weekend_active_rate", ses
                ),
                weekend_work_rate=archetype(
                    config, "weekend_work_rate", ses
                ),
                weekend_fun_rate=archetype(config, "weekend_fun_rate", ses),
            )
        )
    LOGGER.info(
        "Generated %d agents: %s",
        len(agents),
        ", ".join(
            f"{c} {level}" for c, level in zip(counts, SESLevel, strict=True)
        ),
    )
    return agents


def oracle_manifest(agents: cabc.Iterable[Agent]) -> dict[str, OracleEntry]:
    """The hidden truth of every agent, keyed by card id.

    The pipeline itself never reads this; it exists to check the
    pipeline's results.
    """
    return {a.agent_id: OracleEntry(a.ses, a.home, a.work) for a in agents}


def write_manifest(
    manifest: cabc.Mapping[str, OracleEntry],
    path: str | os.PathLike[str],
) -> None:
    frame = pd.DataFrame(
        [
            (card_id, str(e.ses), e.home, e.work)
            for card_id, e in manifest.items()
        ],
        columns=list(MANIFEST_COLUMNS),
    )
    with helpers.atomic_write(path, newline="") as file:
        frame.to_csv(file, index=False, lineterminator="\n")


def load_manifest(path: str | os.PathLike[str]) -> dict[str, OracleEntry]:
    frame = pd.read_csv(path, dtype={"card_id": str}, keep_default_na=False)
    missing = set(MANIFEST_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"Manifest {path} lacks columns: {sorted(missing)}")
    return {
        r.card_id: OracleEntry(
            SESLevel.parse(r.ses),
            int(r.home_station_id),
            int(r.work_station_id),
        )
        for r in frame.itertuples(index=False)
    }
