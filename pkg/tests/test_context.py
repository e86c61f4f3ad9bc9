# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0

import collections
import dataclasses
import datetime
import decimal
import math
import random

import numpy as np
import pytest

from smartses import context, helpers, ingest
from smartses.config import ContextConfig
from smartses.modeltypes import (
    PoiCategory,
    SESLevel,
    StationFunction,
    StationRole,
)

from .conftest import (  # type: ignore[import-untyped]
    MONDAY,
    STATIONS,
    commuter,
    make_history,
    make_trip,
)

SATURDAY = MONDAY.replace(day=11)


def _profiles(prices: dict[int, float | None]):
    return {
        s.station_id: context.StationProfile(
            s.station_id,
            s.lat,
            s.lon,
            StationFunction.RESIDENTIAL,
            prices.get(s.station_id),
        )
        for s in STATIONS
    }


def _random_trips(rng: random.Random):
    trips = []
    for i in range(rng.randint(0, 40)):
        date = MONDAY + datetime.timedelta(days=rng.randrange(14))
        board = rng.randrange(helpers.SECONDS_PER_DAY - 1)
        alight = rng.randint(board + 1, helpers.SECONDS_PER_DAY - 1)
        trips.append(
            ingest.Trip(
                str(i),
                date,
                rng.randint(1, 5),
                board,
                rng.randint(1, 5),
                alight,
                decimal.Decimal("3"),
            )
        )
    return trips


def _haversine(p, q):
    phi1, phi2 = math.radians(p[0]), math.radians(q[0])
    a = (
        math.sin((phi2 - phi1) / 2) ** 2
        + math.cos(phi1)
        * math.cos(phi2)
        * math.sin(math.radians(q[1] - p[1]) / 2) ** 2
    )
    return 2 * helpers.EARTH_RADIUS_KM * math.asin(math.sqrt(a))


class TestFlowProfiles:
    @staticmethod
    def test_commute_legs_are_counted_per_hour():
        trips = commuter("a", 1, 2).trips

        profiles = context.build_flow_profiles(trips)

        home, work = profiles[1], profiles[2]
        assert home.weekday_board[7] == 6
        assert home.weekday_alight[18] == 6
        assert work.weekday_alight[8] == 6
        assert work.weekday_board[18] == 6
        assert home.weekend_share == 0.0

    @staticmethod
    def test_one_pass_matches_single_station_profiles():
        trips = commuter("a", 1, 2).trips + commuter("b", 3, 1).trips

        profiles = context.build_flow_profiles(trips, [1, 2, 3, 4])

        for station_id, profile in profiles.items():
            expected = context.station_flow_profile(trips, station_id)
            assert profile == expected
        assert profiles[4].total == 0

    @staticmethod
    def test_profiles_match_a_recount_of_random_trips():
        rng = random.Random(4)

        for _ in range(100):
            trips = _random_trips(rng)
            station_id = rng.randint(1, 5)
            expected = np.zeros((2, 2, 24), dtype=np.int64)
            for trip in trips:
                weekend = int(trip.date.weekday() >= 5)
                if trip.board_station == station_id:
                    expected[weekend, 0, trip.board_time // 3600] += 1
                if trip.alight_station == station_id:
                    expected[weekend, 1, trip.alight_time // 3600] += 1

            actual = context.station_flow_profile(trips, station_id)
            one_pass = context.build_flow_profiles(trips, [station_id])

            np.testing.assert_array_equal(actual.counts, expected)
            assert one_pass[station_id] == actual


class TestStationFunction:
    @staticmethod
    def test_morning_departures_and_evening_returns_mean_residential():
        profiles = context.build_flow_profiles(commuter("a", 1, 2).trips)

        actual = context.classify_station_function(profiles[1], {})

        assert actual == (StationFunction.RESIDENTIAL, False)

    @staticmethod
    def test_morning_arrivals_and_evening_departures_mean_work():
        profiles = context.build_flow_profiles(commuter("a", 1, 2).trips)

        actual = context.classify_station_function(profiles[2], {})

        assert actual == (StationFunction.WORK, False)

    @staticmethod
    def test_weekend_traffic_means_entertainment():
        profile = context.FlowProfile(7)
        profile.counts[1, 0, 12] = 10
        profile.counts[0, 0, 12] = 5

        actual = context.classify_station_function(profile, {})

        assert actual == (StationFunction.ENTERTAINMENT, False)

    @staticmethod
    @pytest.mark.parametrize(
        ("pois", "expected"),
        [
            pytest.param(
                {PoiCategory.RESTAURANT: 3, PoiCategory.HOTEL: 1},
                StationFunction.ENTERTAINMENT,
                id="leisure",
            ),
            pytest.param(
                {
                    PoiCategory.FINANCIAL_SERVICES: 3,
                    PoiCategory.BUSINESS_RESIDENCE: 1,
                },
                StationFunction.WORK,
                id="financial",
            ),
            pytest.param(
                {
                    PoiCategory.BUSINESS_RESIDENCE: 4,
                    PoiCategory.EDUCATION: 1,
                },
                StationFunction.RESIDENTIAL,
                id="residence",
            ),
        ],
    )
    def test_quiet_stations_follow_their_pois(pois, expected):
        profile = context.FlowProfile(7)

        actual = context.classify_station_function(profile, pois)

        assert actual == (expected, False)

    @staticmethod
    def test_stations_without_any_signal_are_low_confidence():
        actual = context.classify_station_function(context.FlowProfile(7), {})

        assert actual == (StationFunction.RESIDENTIAL, True)


def test_pois_attach_to_the_nearest_station_within_range(registry):
    pois = [
        context.Poi("near-1", 31.201, 121.401, PoiCategory.HOTEL),
        context.Poi("near-4", 31.299, 121.499, PoiCategory.SCENERY),
        context.Poi("far", 40.0, 100.0, PoiCategory.HOTEL),
    ]

    actual = context.attach_pois(pois, registry, radius_km=1.0)

    assert actual == {
        1: collections.Counter({PoiCategory.HOTEL: 1}),
        2: collections.Counter(),
        3: collections.Counter(),
        4: collections.Counter({PoiCategory.SCENERY: 1}),
    }


def test_poi_files_are_parsed_by_category_label(tmp_path):
    path = tmp_path / "pois.csv"
    path.write_text(
        "poi_id,lat,lon,category\n"
        "p1,31.2,121.4,Sport&Leisure\n"
        "p2,31.3,121.5,Financial Services\n",
        encoding="utf-8",
    )

    actual = context.load_pois(path)

    assert [p.category for p in actual] == [
        PoiCategory.SPORT_LEISURE,
        PoiCategory.FINANCIAL_SERVICES,
    ]


class TestPrices:
    @staticmethod
    def test_price_index_averages_communities_in_range():
        communities = [
            context.Community("a", 31.201, 121.40, 30000.0),
            context.Community("b", 31.199, 121.40, 50000.0),
            context.Community("c", 31.300, 121.40, 99000.0),
        ]

        actual = context.price_index_near((31.2, 121.4), communities, 2.0)

        assert actual == 40000.0

    @staticmethod
    def test_price_index_without_communities_in_range_is_none():
        communities = [context.Community("c", 31.3, 121.4, 99000.0)]

        assert context.price_index_near((31.2, 121.4), communities) is None
        assert context.price_index_near((31.2, 121.4), []) is None

    @staticmethod
    def test_price_index_needs_a_positive_radius():
        with pytest.raises(ValueError):
            context.price_index_near((0.0, 0.0), [], radius_km=0.0)

    @staticmethod
    def test_price_index_matches_a_scan_of_all_communities():
        rng = random.Random(2)

        for _ in range(300):
            home = (rng.uniform(31.1, 31.3), rng.uniform(121.3, 121.5))
            communities = [
                context.Community(
                    str(i),
                    rng.uniform(31.0, 31.4),
                    rng.uniform(121.2, 121.6),
                    rng.uniform(1000.0, 150000.0),
                )
                for i in range(rng.randint(0, 40))
            ]
            radius = rng.uniform(0.5, 15.0)
            distances = [
                _haversine(home, (c.lat, c.lon)) for c in communities
            ]
            if any(abs(d - radius) < 1e-6 for d in distances):
                continue
            near = [
                c.avg_price
                for c, d in zip(communities, distances, strict=True)
                if d <= radius
            ]

            actual = context.price_index_near(home, communities, radius)

            if near:
                assert actual == pytest.approx(sum(near) / len(near))
            else:
                assert actual is None

    @staticmethod
    def test_implausible_prices_are_rejected(tmp_path):
        path = tmp_path / "communities.csv"
        path.write_text(
            "community_id,lat,lon,avg_price_cny_per_m2\nc1,31.2,121.4,12\n",
            encoding="utf-8",
        )

        with pytest.raises(ValueError, match="out of range"):
            context.load_communities(path)


class TestThresholds:
    PRICES = [1000.0 * i for i in range(1, 11)]

    def test_quantile_mode_places_both_boundaries_between_prices(self):
        actual = context.calibrate_thresholds(
            self.PRICES, (0.3, 0.4, 0.3), mode="quantile"
        )

        assert actual == context.Thresholds(3500.0, 7500.0)

    def test_fixed_mode_keeps_the_high_boundary(self):
        actual = context.calibrate_thresholds(
            self.PRICES, (0.3, 0.4, 0.3), mode="fixed", t_high=70000.0
        )

        assert actual == context.Thresholds(3500.0, 70000.0)

    @staticmethod
    def test_low_boundary_above_high_boundary_is_an_error():
        with pytest.raises(ValueError):
            context.calibrate_thresholds([80000.0, 90000.0, 95000.0])

    @staticmethod
    @pytest.mark.parametrize(
        ("price", "expected"),
        [
            pytest.param(20000.0, SESLevel.LOW, id="below"),
            pytest.param(30000.0, SESLevel.MIDDLE, id="on-low"),
            pytest.param(50000.0, SESLevel.MIDDLE, id="between"),
            pytest.param(70000.0, SESLevel.MIDDLE, id="on-high"),
            pytest.param(70000.5, SESLevel.HIGH, id="above"),
        ],
    )
    def test_prices_map_to_classes(price, expected):
        thresholds = context.Thresholds(30000.0, 70000.0)

        assert context.label_ses(price, thresholds) is expected

    @staticmethod
    def test_missing_prices_cannot_be_labeled():
        with pytest.raises(context.UnlabelableUserError):
            context.label_ses(None, context.Thresholds(1.0, 2.0))

    @staticmethod
    def test_higher_prices_never_get_lower_classes():
        rng = random.Random(9)

        for _ in range(200):
            t_low, t_high = sorted(
                rng.uniform(1000, 200000) for _ in range(2)
            )
            thresholds = context.Thresholds(t_low, t_high)
            prices = sorted(
                rng.choice([rng.uniform(1000, 200000), t_low, t_high])
                for _ in range(30)
            )

            levels = [context.label_ses(p, thresholds) for p in prices]

            codes = [level.code for level in levels]
            assert codes == sorted(codes)
            for price, level in zip(prices, levels, strict=True):
                if price > t_high:
                    assert level is SESLevel.HIGH
                elif price < t_low:
                    assert level is SESLevel.LOW
                else:
                    assert level is SESLevel.MIDDLE

    @staticmethod
    def test_rank_labels_match_the_shares():
        prices = [5000.0] * 4 + [9000.0, 1000.0, 7000.0, 3000.0, 8000.0]
        prices.append(2000.0)
        keys = [f"u{i}" for i in range(10)]

        actual = context.rank_labels(prices, keys, (0.444, 0.362, 0.194))

        counts = collections.Counter(actual)
        assert counts == {
            SESLevel.LOW: 4,
            SESLevel.MIDDLE: 4,
            SESLevel.HIGH: 2,
        }
        assert actual[4] is SESLevel.HIGH
        assert actual[5] is SESLevel.LOW


class TestStationRoles:
    @staticmethod
    def test_home_is_where_most_days_start():
        assert context.infer_home_station(commuter("a", 3, 2)) == 3

    @staticmethod
    def test_home_ties_go_to_the_smaller_station_id():
        history = make_history(
            "a",
            [
                make_trip("a", MONDAY, (4, "07:00:00"), (2, "08:00:00")),
                make_trip("a", MONDAY, (2, "17:00:00"), (4, "18:00:00")),
                make_trip(
                    "a",
                    MONDAY.replace(day=7),
                    (3, "07:00:00"),
                    (2, "08:00:00"),
                ),
                make_trip(
                    "a",
                    MONDAY.replace(day=7),
                    (2, "17:00:00"),
                    (3, "18:00:00"),
                ),
            ],
        )

        assert context.infer_home_station(history) == 3

    @staticmethod
    def test_users_without_boardings_cannot_be_labeled():
        history = ingest.UserHistory("a", (), ())

        with pytest.raises(context.UnlabelableUserError):
            context.infer_home_station(history)

    @staticmethod
    def test_work_is_the_busiest_weekday_daytime_station():
        assert context.infer_work_station(commuter("a", 1, 2), 1) == 2

    @staticmethod
    def test_work_needs_enough_visits():
        history = commuter("a", 1, 2)

        assert (
            context.infer_work_station(history, 1, min_visits=100) is None
        )

    @staticmethod
    def test_weekend_stations_are_never_work():
        history = make_history(
            "a",
            [
                make_trip("a", SATURDAY, (1, "09:00:00"), (4, "10:00:00")),
                make_trip("a", SATURDAY, (4, "15:00:00"), (1, "16:00:00")),
            ],
        )

        assert context.infer_work_station(history, 1, min_visits=1) is None

    @staticmethod
    def test_user_roles_cover_all_visited_stations():
        history = make_history(
            "a",
            [
                *commuter("a", 1, 2).trips,
                make_trip("a", SATURDAY, (1, "09:00:00"), (4, "10:00:00")),
            ],
        )

        actual = context.infer_user_station_roles(history, 1)

        assert actual == {
            1: StationRole.HOME,
            2: StationRole.WORK,
            4: StationRole.OTHERS,
        }


class TestLabelUsers:
    @staticmethod
    def test_users_are_labeled_by_their_home_price():
        histories = [commuter("a", 1, 2), commuter("b", 3, 2)]
        profiles = _profiles({1: 30000.0, 3: 90000.0})

        actual = context.label_users(histories, profiles, ContextConfig())

        assert [(lb.card_id, lb.ses) for lb in actual.labels] == [
            ("a", SESLevel.LOW),
            ("b", SESLevel.HIGH),
        ]
        assert [lb.work_station for lb in actual.labels] == [2, 2]
        assert actual.thresholds == context.Thresholds(60000.0, 70000.0)

    @staticmethod
    def test_configured_low_boundary_is_used_as_is():
        histories = [commuter("a", 1, 2), commuter("b", 3, 2)]
        profiles = _profiles({1: 50000.0, 3: 60000.0})
        config = ContextConfig(t_low=40000.0)

        actual = context.label_users(histories, profiles, config)

        assert actual.thresholds == context.Thresholds(40000.0, 70000.0)
        assert {lb.ses for lb in actual.labels} == {SESLevel.MIDDLE}

    @staticmethod
    def test_users_without_a_nearby_price_are_dropped():
        histories = [commuter("a", 1, 2), commuter("c", 4, 2)]
        profiles = _profiles({1: 30000.0})

        actual = context.label_users(histories, profiles, ContextConfig())

        assert [lb.card_id for lb in actual.labels] == ["a"]
        assert list(actual.dropped) == ["c"]

    @staticmethod
    def test_labeling_nobody_is_an_error():
        with pytest.raises(context.UnlabelableUserError):
            context.label_users(
                [commuter("c", 4, 2)], _profiles({}), ContextConfig()
            )

    @staticmethod
    def test_quantile_mode_matches_the_class_shares():
        shares = (0.444, 0.362, 0.194)
        histories = [
            commuter(f"u{i:02d}", 1 + i % 4, 1 + (i + 1) % 4)
            for i in range(40)
        ]
        profiles = _profiles({1: 20000.0, 2: 45000.0, 3: 60000.0, 4: 80000.0})
        config = ContextConfig(threshold_mode="quantile", class_shares=shares)

        actual = context.label_users(histories, profiles, config)

        for level, share in zip(SESLevel, shares, strict=True):
            count = sum(1 for lb in actual.labels if lb.ses is level)
            assert abs(count - share * 40) <= 1


def test_station_profiles_combine_traffic_and_prices(registry):
    histories = [commuter("a", 1, 2), commuter("b", 1, 2)]
    communities = [context.Community("c", 31.201, 121.401, 42000.0)]

    actual = context.build_station_profiles(
        histories, registry, communities, {}, ContextConfig()
    )

    assert actual[1].function is StationFunction.RESIDENTIAL
    assert actual[1].price_index == 42000.0
    assert actual[2].function is StationFunction.WORK
    assert actual[2].price_index is None
    assert actual[4].low_confidence


def test_label_and_profile_files_load_back(tmp_path):
    profiles = _profiles({1: 30000.0, 3: 90000.0})
    labels = context.label_users(
        [commuter("a", 1, 2), commuter("b", 3, 2)], profiles, ContextConfig()
    ).labels

    context.write_station_profiles(profiles, tmp_path / "profiles.csv")
    context.write_labels(labels, tmp_path / "labels.csv")

    assert context.load_station_profiles(tmp_path / "profiles.csv") == (
        profiles
    )
    assert context.load_labels(tmp_path / "labels.csv") == [
        dataclasses.replace(lb, work_station=None) for lb in labels
    ]


def test_flow_profiles_compare_by_counts():
    first = context.FlowProfile(1)
    second = context.FlowProfile(1)
    second.counts[0, 0, 0] = 1

    assert first != second
    assert np.array_equal(first.counts, np.zeros((2, 2, 24)))
