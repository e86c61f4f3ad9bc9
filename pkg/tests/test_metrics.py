# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0

import fractions

import numpy as np
import pytest

from smartses import model

PREDICTIONS = [0, 0, 1, 2, 2, 1]
LABELS = [0, 1, 1, 2, 0, 1]


@pytest.fixture
def report():
    return model.evaluate(PREDICTIONS, LABELS, method="test")


def test_confusion_rows_are_the_true_classes(report):
    expected = [[1, 0, 1], [1, 2, 0], [0, 0, 1]]

    assert report.confusion.tolist() == expected
    assert report.support.tolist() == [2, 3, 1]


def test_per_class_metrics(report):
    np.testing.assert_allclose(report.precision, [0.5, 1.0, 0.5])
    np.testing.assert_allclose(report.recall, [0.5, 2 / 3, 1.0])
    np.testing.assert_allclose(report.f1, [0.5, 0.8, 2 / 3])


def test_macro_values_are_unweighted_means(report):
    assert report.macro_precision == pytest.approx(2 / 3)
    assert report.macro_recall == pytest.approx((0.5 + 2 / 3 + 1) / 3)
    assert report.macro_f1 == pytest.approx((0.5 + 0.8 + 2 / 3) / 3)
    assert report.accuracy == pytest.approx(4 / 6)


def test_classes_that_are_never_predicted_score_zero():
    actual = model.evaluate([0, 0, 0], [0, 1, 2])

    assert actual.precision.tolist() == [1 / 3, 0.0, 0.0]
    assert actual.f1[1] == 0.0


def test_perfect_predictions():
    actual = model.evaluate([0, 1, 2, 2], [0, 1, 2, 2])

    assert actual.macro_f1 == 1.0
    assert actual.accuracy == 1.0


@pytest.mark.parametrize(
    ("predictions", "labels"),
    [
        pytest.param([], [], id="empty"),
        pytest.param([0, 1], [0], id="length"),
        pytest.param([0, 3], [0, 1], id="range"),
        pytest.param([0, -1], [0, 1], id="negative"),
    ],
)
def test_invalid_inputs_are_rejected(predictions, labels):
    with pytest.raises(ValueError):
        model.evaluate(predictions, labels)


def test_reports_survive_serialization():
    report = model.evaluate(
        PREDICTIONS, LABELS, method="x", loss_history=[1.0, 0.5]
    )

    actual = model.EvalReport.from_dict(report.to_dict())

    assert actual == report
    assert actual.loss_history == (1.0, 0.5)


def test_text_rendering_has_one_metric_per_line(report):
    lines = report.to_text().splitlines()

    assert lines[0] == "method: test"
    assert "low.precision: 0.500000" in lines
    assert "macro.f1: 0.655556" in lines
    assert "accuracy: 0.666667" in lines


def test_confusion_csv(report):
    expected = (
        "true\\predicted,low,middle,high\n"
        "low,1,0,1\n"
        "middle,1,2,0\n"
        "high,0,0,1\n"
    )

    assert report.confusion_csv() == expected


class TestRandomGuess:
    @staticmethod
    def test_is_reproducible():
        labels = np.arange(30) % 3

        first = model.random_guess_baseline(labels, 5)
        second = model.random_guess_baseline(labels, 5)

        assert first == second
        assert first.method == "Random Guess"

    @staticmethod
    def test_scores_about_a_third():
        labels = np.random.default_rng(0).integers(0, 3, 6000)

        actual = model.random_guess_baseline(labels, 1)

        assert actual.macro_f1 == pytest.approx(1 / 3, abs=0.03)


def _pairs(matrix):
    labels, predictions = [], []
    for true, row in enumerate(matrix):
        for predicted, count in enumerate(row):
            labels += [true] * count
            predictions += [predicted] * count
    return predictions, labels


@pytest.mark.parametrize(
    ("matrix", "precision", "recall", "f1"),
    [
        pytest.param(
            [[2, 0, 0], [0, 2, 0], [0, 0, 2]],
            "1 1 1",
            "1 1 1",
            "1 1 1",
            id="perfect",
        ),
        pytest.param(
            [[0, 1, 0], [0, 0, 1], [1, 0, 0]],
            "0 0 0",
            "0 0 0",
            "0 0 0",
            id="always-wrong",
        ),
        pytest.param(
            [[3, 0, 0], [2, 0, 0], [1, 0, 0]],
            "1/2 0 0",
            "1 0 0",
            "2/3 0 0",
            id="always-low",
        ),
        pytest.param(
            [[2, 1, 0], [1, 2, 0], [0, 0, 0]],
            "2/3 2/3 0",
            "2/3 2/3 0",
            "2/3 2/3 0",
            id="high-absent",
        ),
        pytest.param(
            [[1, 0, 1], [0, 1, 1], [0, 0, 0]],
            "1 1 0",
            "1/2 1/2 0",
            "2/3 2/3 0",
            id="high-predicted-but-absent",
        ),
        pytest.param(
            [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
            "0 1 0",
            "0 1 0",
            "0 1 0",
            id="single-hit",
        ),
        pytest.param(
            [[0, 0, 0], [0, 0, 1], [0, 0, 0]],
            "0 0 0",
            "0 0 0",
            "0 0 0",
            id="single-miss",
        ),
        pytest.param(
            [[5, 0, 0], [0, 1, 0], [0, 0, 3]],
            "1 1 1",
            "1 1 1",
            "1 1 1",
            id="perfect-uneven",
        ),
        pytest.param(
            [[1, 3, 0], [0, 4, 0], [0, 2, 2]],
            "1 4/9 1",
            "1/4 1 1/2",
            "2/5 8/13 2/3",
            id="middle-absorbs",
        ),
        pytest.param(
            [[1, 0, 1], [1, 2, 0], [0, 0, 1]],
            "1/2 1 1/2",
            "1/2 2/3 1",
            "1/2 4/5 2/3",
            id="mixed",
        ),
        pytest.param(
            [[1, 2, 0], [0, 1, 2], [0, 0, 3]],
            "1 1/3 3/5",
            "1/3 1/3 1",
            "1/2 1/3 3/4",
            id="one-class-too-high",
        ),
        pytest.param(
            [[3, 0, 0], [2, 1, 0], [0, 2, 1]],
            "3/5 1/3 1",
            "1 1/3 1/3",
            "3/4 1/3 1/2",
            id="one-class-too-low",
        ),
        pytest.param(
            [[2, 1, 1], [1, 2, 1], [1, 1, 2]],
            "1/2 1/2 1/2",
            "1/2 1/2 1/2",
            "1/2 1/2 1/2",
            id="symmetric",
        ),
        pytest.param(
            [[0, 0, 0], [1, 3, 0], [2, 0, 4]],
            "0 1 1",
            "0 3/4 2/3",
            "0 6/7 4/5",
            id="low-absent",
        ),
        pytest.param(
            [[0, 2, 2], [0, 3, 1], [0, 1, 3]],
            "0 1/2 1/2",
            "0 3/4 3/4",
            "0 3/5 3/5",
            id="low-never-predicted",
        ),
        pytest.param(
            [[0, 0, 0], [0, 0, 0], [1, 2, 5]],
            "0 0 1",
            "0 0 5/8",
            "0 0 10/13",
            id="only-high-present",
        ),
        pytest.param(
            [[50, 30, 20], [10, 70, 20], [5, 15, 80]],
            "10/13 14/23 2/3",
            "1/2 7/10 4/5",
            "20/33 28/43 8/11",
            id="large-counts",
        ),
        pytest.param(
            [[1, 0, 0], [1, 9, 0], [0, 1, 0]],
            "1/2 9/10 0",
            "1 9/10 0",
            "2/3 9/10 0",
            id="skewed-support",
        ),
        pytest.param(
            [[1, 2, 2], [0, 1, 3], [0, 0, 4]],
            "1 1/3 4/9",
            "1/5 1/4 1",
            "1/3 2/7 8/13",
            id="drift-to-high",
        ),
        pytest.param(
            [[3, 0, 0], [0, 0, 2], [0, 2, 0]],
            "1 0 0",
            "1 0 0",
            "1 0 0",
            id="two-classes-swapped",
        ),
    ],
)
def test_metrics_match_hand_computed_values(matrix, precision, recall, f1):
    expected = {
        name: [float(fractions.Fraction(v)) for v in values.split()]
        for name, values in (
            ("precision", precision),
            ("recall", recall),
            ("f1", f1),
        )
    }

    actual = model.evaluate(*_pairs(matrix))

    assert actual.confusion.tolist() == matrix
    assert actual.support.tolist() == [sum(row) for row in matrix]
    for name, values in expected.items():
        assert getattr(actual, name).tolist() == pytest.approx(
            values, abs=1e-12
        ), name
    assert abs(actual.macro_f1 - actual.f1.mean()) <= 1e-12
    assert actual.macro_f1 == pytest.approx(
        sum(expected["f1"]) / 3, abs=1e-12
    )
