# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "RECORDS_FILE",
    "TRUTH_FILE",
    "Synthetic",
    "fare_for",
    "simulate_agent",
    "simulate_records",
    "synthesize",
    "travel_seconds",
    "write_synthetic",
]

import collections.abc as cabc
import concurrent.futures
import dataclasses
import datetime
import decimal
import functools
import logging
import math
import os
import pathlib

import numpy as np

from smartses import helpers
from smartses.config import CityConfig, PopulationConfig
from smartses.ingest import CardRecord, write_records

from ._city import (
    COMMUNITIES_FILE,
    POIS_FILE,
    STATIONS_FILE,
    City,
    generate_city,
    write_city,
)
from ._population import (
    Agent,
    generate_population,
    oracle_manifest,
    write_manifest,
)

LOGGER = logging.getLogger(__name__)

RECORDS_FILE = "records.csv"
TRUTH_FILE = "truth.csv"

SPEED_KMH = 30.0
ACCESS_S = 300
"""Time spent inside the fare gates on top of the ride itself."""
BASE_FARE = 3
FARE_FREE_KM = 6.0
FARE_STEP_KM = 10.0
LATEST_S = helpers.SECONDS_PER_DAY - 1
HOUR = 3600.0
BOARDING_FARE = decimal.Decimal("0.0")


def travel_seconds(km: float) -> int:
    return ACCESS_S + round(km / SPEED_KMH * HOUR)


def fare_for(km: float) -> decimal.Decimal:
    """Distance-based fare in CNY: a base fare covers the first 6 km."""
    steps = math.ceil(max(0.0, km - FARE_FREE_KM) / FARE_STEP_KM)
    return decimal.Decimal(f"{BASE_FARE + steps}.0")


class _Day:
    """Collects the records of one agent on one day."""

    def __init__(
        self, city: City, agent: Agent, date: datetime.date
    ) -> None:
        self.city = city
        self.agent = agent
        self.date = date
        self.here = agent.home
        self.clock = 0
        self.closed = False
        self.records: list[CardRecord] = []

    def go(self, dest: int, depart: float) -> None:
        """Travel to ``dest``, leaving no earlier than ``depart``.

        A journey that would end after midnight, and every later one,
        is dropped.
        """
        if self.closed or dest == self.here:
            return
        board = max(round(depart), self.clock + 60)
        km = helpers.haversine_km(
            *self.city.registry.coords(self.here),
            *self.city.registry.coords(dest),
        )
        alight = board + travel_seconds(km)
        if alight > LATEST_S:
            self.closed = True
            return
        card = self.agent.agent_id
        self.records.append(
            CardRecord(card, self.date, board, self.here, BOARDING_FARE)
        )
        self.records.append(
            CardRecord(card, self.date, alight, dest, fare_for(km))
        )
        self.here = dest
        self.clock = alight


def _jitter(rng: np.random.Generator, sd_s: float) -> float:
    return float(np.clip(rng.normal(0.0, sd_s), -3 * sd_s, 3 * sd_s))


def _work_day(
    day: _Day,
    rng: np.random.Generator,
    jitter_s: float,
    *,
    part_time: bool,
    evening_fun: bool,
) -> None:
    agent = day.agent
    if part_time:
        depart = 13 * HOUR + _jitter(rng, jitter_s)
        hours = agent.work_hours / 2
    else:
        depart = agent.start_s + _jitter(rng, jitter_s)
        hours = agent.work_hours
    day.go(agent.work, min(max(depart, 5 * HOUR), 14 * HOUR))
    leave = day.clock + hours * HOUR + _jitter(rng, jitter_s)
    if evening_fun:
        day.go(agent.fun_stations[rng.choice(len(agent.fun_stations))], leave)
        leave = day.clock + rng.uniform(1.5, 3.0) * HOUR
    day.go(agent.home, leave)


def simulate_agent(
    city: City,
    agent: Agent,
    config: PopulationConfig,
    seed: int,
) -> list[CardRecord]:
    """Simulate all days of one agent.

    Every agent-day draws from its own named sub-seed, so the result
    does not depend on which other agents are simulated.
    """
    jitter_s = config.jitter_sd_min * 60
    others = [i for i in city.registry if i != agent.home]
    records: list[CardRecord] = []
    for offset in range(config.days):
        date = config.start_date + datetime.timedelta(days=offset)
        rng = np.random.default_rng(
            helpers.derive_seed(seed, f"{agent.agent_id}/{date.isoformat()}")
        )
        day = _Day(city, agent, date)
        if date.weekday() < 5:
            _work_day(
                day,
                rng,
                jitter_s,
                part_time=rng.random() < agent.part_time_rate,
                evening_fun=rng.random() < agent.evening_fun_rate,
            )
        elif rng.random() < agent.weekend_active_rate:
            if rng.random() < agent.weekend_work_rate:
                _work_day(
                    day, rng, jitter_s, part_time=False, evening_fun=False
                )
            elif rng.random() < agent.weekend_fun_rate:
                fun = agent.fun_stations[rng.choice(len(agent.fun_stations))]
                day.go(fun, rng.uniform(10.0, 15.0) * HOUR)
                day.go(agent.home, day.clock + rng.uniform(2, 5) * HOUR)
            else:
                errand = others[rng.choice(len(others))]
                day.go(errand, rng.uniform(9.0, 17.0) * HOUR)
                day.go(agent.home, day.clock + rng.uniform(1, 3) * HOUR)

        if (
            day.records
            and day.here == agent.home
            and rng.random() < config.extra_trip_rate
        ):
            errand = others[rng.choice(len(others))]
            day.go(errand, day.clock + rng.uniform(0.5, 1.5) * HOUR)
            day.go(agent.home, day.clock + rng.uniform(0.5, 1.5) * HOUR)
        records.extend(day.records)
    return records


def _record_key(record: CardRecord) -> tuple[datetime.date, int, str]:
    return record.date, record.time, record.card_id


def simulate_records(
    city: City,
    agents: cabc.Sequence[Agent],
    config: PopulationConfig,
    seed: int,
    *,
    threads: int = 1,
) -> list[CardRecord]:
    """Simulate the fare records of all agents.

    Each journey yields a boarding with fare zero and an alighting with
    a positive, distance-based fare. The records are returned in global
    time order, independently of ``threads``.
    """
    simulate = functools.partial(
        simulate_agent, city, config=config, seed=seed
    )
    if threads <= 1 or len(agents) < 2:
        per_agent = [simulate(a) for a in agents]
    else:
        with concurrent.futures.ProcessPoolExecutor(threads) as pool:
            per_agent = list(
                pool.map(
                    simulate,
                    agents,
                    chunksize=max(1, len(agents) // (threads * 4)),
                )
            )
    records = sorted(
        (r for batch in per_agent for r in batch), key=_record_key
    )
    LOGGER.info(
        "Simulated %d records of %d agents over %d days",
        len(records),
        len(agents),
        config.days,
    )
    return records


@dataclasses.dataclass(frozen=True, eq=False)
class Synthetic:
    city: City
    agents: list[Agent]
    records: list[CardRecord]


def synthesize(
    city_config: CityConfig,
    population_config: PopulationConfig,
    seed: int,
    *,
    threads: int = 1,
) -> Synthetic:
    """Generate a city, its population and their records.

    Each of the three steps uses its own named sub-seed of ``seed``.
    """
    city = generate_city(city_config, helpers.derive_seed(seed, "city"))
    agents = generate_population(
        city, population_config, helpers.derive_seed(seed, "population")
    )
    records = simulate_records(
        city,
        agents,
        population_config,
        helpers.derive_seed(seed, "records"),
        threads=threads,
    )
    return Synthetic(city, agents, records)


def write_synthetic(
    synthetic: Synthetic, directory: str | os.PathLike[str]
) -> dict[str, pathlib.Path]:
    """Write all files of a synthetic data set into a directory.

    Returns
    -------
    dict[str, pathlib.Path]
        The written files, keyed by their base name.
    """
    directory = pathlib.Path(directory)
    write_city(synthetic.city, directory)
    write_records(
        synthetic.records,
        synthetic.city.registry,
        directory / RECORDS_FILE,
    )
    write_manifest(oracle_manifest(synthetic.agents), directory / TRUTH_FILE)
    names = (
        STATIONS_FILE,
        COMMUNITIES_FILE,
        POIS_FILE,
        RECORDS_FILE,
        TRUTH_FILE,
    )
    return {name: directory / name for name in names}
