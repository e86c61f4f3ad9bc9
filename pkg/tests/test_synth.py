# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0

import collections
import dataclasses

import pytest

from smartses import context, helpers, ingest, synth
from smartses.config import CityConfig, PopulationConfig
from smartses.modeltypes import SESLevel, StationFunction

SMALL = PopulationConfig(n_agents=60)


@pytest.fixture(scope="module")
def city():
    return synth.generate_city(CityConfig(), 1)


@pytest.fixture(scope="module")
def synthetic():
    return synth.synthesize(CityConfig(), PopulationConfig(n_agents=300), 9)


@pytest.mark.parametrize(
    ("shares", "total", "expected"),
    [
        pytest.param((0.444, 0.362, 0.194), 1000, [444, 362, 194], id="exact"),
        pytest.param((0.444, 0.362, 0.194), 7, [3, 3, 1], id="rounded"),
        pytest.param((0.5, 0.5), 3, [2, 1], id="tie"),
        pytest.param((1.0, 0.0, 0.0), 5, [5, 0, 0], id="single"),
    ],
)
def test_apportion(shares, total, expected):
    assert synth.apportion(shares, total) == expected


def test_offsets_are_in_kilometers():
    center = (31.23, 121.47)

    north = synth.km_to_latlon(center, 0.0, 1.0)
    east = synth.km_to_latlon(center, 1.0, 0.0)

    assert helpers.haversine_km(*center, *north) == pytest.approx(1, 1e-3)
    assert helpers.haversine_km(*center, *east) == pytest.approx(1, 1e-3)


class TestCity:
    @staticmethod
    def test_every_function_has_stations(city):
        counts = collections.Counter(city.functions.values())

        assert sum(counts.values()) == len(city.registry) == 36
        assert counts[StationFunction.RESIDENTIAL] == 18
        assert counts[StationFunction.ENTERTAINMENT] == 9
        assert counts[StationFunction.WORK] == 9

    @staticmethod
    def test_every_tier_has_residential_stations(city):
        for tier in SESLevel:
            assert city.stations_in_tier(tier)
        assert set(city.tiers) == set(
            city.stations_with(StationFunction.RESIDENTIAL)
        )

    @staticmethod
    def test_community_prices_follow_the_tiers(city):
        bands = CityConfig().price_tiers

        for community in city.communities:
            station = int(community.community_id[1:4])
            low, high = bands[city.tiers[station].code]
            assert low <= community.avg_price <= high

    @staticmethod
    def test_same_seed_same_city(city):
        again = synth.generate_city(CityConfig(), 1)

        assert again.registry.coord_map() == city.registry.coord_map()
        assert again.functions == city.functions
        assert again.communities == city.communities

    @staticmethod
    def test_function_mixes_need_two_stations_each():
        config = CityConfig(n_stations=6, function_mix=(0.9, 0.05, 0.05))

        with pytest.raises(synth.InfeasibleCityError):
            synth.generate_city(config, 0)


class TestPopulation:
    @staticmethod
    def test_class_sizes_follow_the_shares_exactly(city):
        config = PopulationConfig(n_agents=1000)

        agents = synth.generate_population(city, config, 3)

        counts = collections.Counter(a.ses for a in agents)
        assert [counts[level] for level in SESLevel] == [444, 362, 194]

    @staticmethod
    def test_single_class_population(city):
        config = PopulationConfig(n_agents=20, class_shares=(1.0, 0.0, 0.0))

        agents = synth.generate_population(city, config, 3)

        assert {a.ses for a in agents} == {SESLevel.LOW}

    @staticmethod
    def test_agents_live_and_work_where_planted(city):
        agents = synth.generate_population(city, SMALL, 3)

        for agent in agents:
            assert city.tiers[agent.home] is agent.ses
            assert city.functions[agent.work] is StationFunction.WORK
            for fun in agent.fun_stations:
                assert city.functions[fun] is StationFunction.ENTERTAINMENT

    @staticmethod
    def test_same_seed_same_population(city):
        first = synth.generate_population(city, SMALL, 3)
        second = synth.generate_population(city, SMALL, 3)

        assert first == second

    @staticmethod
    def test_zero_separation_erases_class_differences():
        config = PopulationConfig(separation=0.0)

        low = synth.archetype(config, "start_mean_h", SESLevel.LOW)
        high = synth.archetype(config, "start_mean_h", SESLevel.HIGH)

        assert low == high == 8.0

    @staticmethod
    def test_exaggerated_rates_stay_probabilities():
        config = PopulationConfig(separation=5.0)

        actual = synth.archetype(config, "weekend_fun_rate", SESLevel.HIGH)

        assert actual == 1.0


class TestSimulation:
    @staticmethod
    def test_fares_grow_with_distance():
        assert synth.fare_for(0.0) == synth.fare_for(6.0) == 3
        assert synth.fare_for(6.1) == 4
        assert synth.fare_for(26.5) == 6

    @staticmethod
    def test_boardings_are_free_and_alightings_are_not(synthetic):
        by_card = collections.defaultdict(list)
        for record in synthetic.records:
            by_card[record.card_id].append(record)

        for records in by_card.values():
            assert len(records) % 2 == 0
            assert records[0].is_boarding
            assert all(r.fare > 0 for r in records[1::2])

    @staticmethod
    def test_records_are_in_time_order(synthetic):
        keys = [(r.date, r.time) for r in synthetic.records]

        assert keys == sorted(keys)

    @staticmethod
    def test_written_records_parse_cleanly(synthetic, tmp_path):
        synth.write_synthetic(synthetic, tmp_path)
        registry = ingest.StationRegistry.load(tmp_path / "stations.csv")

        with (tmp_path / synth.RECORDS_FILE).open("rb") as file:
            parsed = ingest.parse_records(file, registry)
        histories = ingest.build_histories(parsed.records)

        assert parsed.n_rejected == 0
        assert len(parsed.records) == len(synthetic.records)
        assert sum(len(h.orphans) for h in histories) == 0

    @staticmethod
    def test_agents_simulate_independently(synthetic):
        config = PopulationConfig(n_agents=300)
        agent = synthetic.agents[5]
        seed = helpers.derive_seed(9, "records")

        alone = synth.simulate_agent(synthetic.city, agent, config, seed)

        together = [
            r for r in synthetic.records if r.card_id == agent.agent_id
        ]
        assert together == alone

    @staticmethod
    def test_parallel_simulation_matches_serial(city):
        agents = synth.generate_population(city, SMALL, 3)

        serial = synth.simulate_records(city, agents, SMALL, 4)
        parallel = synth.simulate_records(city, agents, SMALL, 4, threads=2)

        assert parallel == serial

    @staticmethod
    def test_most_agents_are_frequent_users(synthetic):
        histories = ingest.build_histories(synthetic.records)

        frequent = ingest.filter_frequent_users(histories, 7)

        assert len(frequent) >= 0.8 * len(synthetic.agents)


def test_manifest_files_load_back_unchanged(synthetic, tmp_path):
    files = synth.write_synthetic(synthetic, tmp_path)

    actual = synth.load_manifest(files[synth.TRUTH_FILE])

    assert actual == synth.oracle_manifest(synthetic.agents)
    assert len(actual) == 300


def test_written_city_is_readable(synthetic, tmp_path):
    synth.write_synthetic(synthetic, tmp_path)

    communities = context.load_communities(tmp_path / synth.COMMUNITIES_FILE)
    pois = context.load_pois(tmp_path / synth.POIS_FILE)

    assert communities == synthetic.city.communities
    assert pois == synthetic.city.pois


def test_planted_homes_and_workplaces_are_recovered(synthetic):
    truth = synth.oracle_manifest(synthetic.agents)
    histories = ingest.filter_frequent_users(
        ingest.build_histories(synthetic.records), 7
    )

    homes = [
        context.infer_home_station(h) == truth[h.card_id].home
        for h in histories
    ]
    works = [
        context.infer_work_station(h, truth[h.card_id].home)
        == truth[h.card_id].work
        for h in histories
    ]

    assert sum(homes) >= 0.95 * len(histories)
    assert sum(works) >= 0.9 * len(histories)


def test_separation_does_not_change_the_city():
    config = dataclasses.replace(SMALL, separation=0.0)

    first = synth.synthesize(CityConfig(), SMALL, 2)
    second = synth.synthesize(CityConfig(), config, 2)

    assert first.city.functions == second.city.functions
    assert [a.home for a in first.agents] == [a.home for a in second.agents]
