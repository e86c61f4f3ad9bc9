# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0

import datetime
import hashlib
import io
import json
import pathlib
import sys

import numpy as np
import pytest

from smartses import config, model, report
from smartses.modeltypes import SESLevel


def _report(method, predictions, **kwargs):
    labels = [0, 0, 1, 1, 2, 2]
    return model.evaluate(predictions, labels, method=method, **kwargs)


REPORTS = [
    _report("Random Guess", [1, 2, 0, 2, 1, 0]),
    _report("S2S-S", [0, 1, 1, 1, 2, 0]),
    _report(
        "S2S-SG",
        [0, 0, 1, 1, 2, 1],
        loss_history=[1.1, 0.7],
        f1_history=[0.5, 0.8],
    ),
]


def test_json_dumps_are_sorted_and_end_with_a_newline(tmp_path):
    path = tmp_path / "out.json"
    obj = {
        "b": np.int64(3),
        "a": np.array([1.5, 2.0]),
        "level": SESLevel.HIGH,
        "date": datetime.date(2015, 4, 1),
        "path": pathlib.PurePosixPath("x/y"),
        "set": {3, 1},
    }

    report.dump_json(obj, path)

    text = path.read_text(encoding="utf-8")
    assert text.endswith("}\n")
    assert list(json.loads(text)) == [
        "a",
        "b",
        "date",
        "level",
        "path",
        "set",
    ]
    assert json.loads(text) == {
        "a": [1.5, 2.0],
        "b": 3,
        "date": "2015-04-01",
        "level": "high",
        "path": "x/y",
        "set": [1, 3],
    }


def test_reports_load_back_from_json(tmp_path):
    path = tmp_path / "eval.json"
    report.dump_json(REPORTS, path)

    actual = report.load_reports(path)

    assert actual == REPORTS


def test_single_reports_load_as_a_list(tmp_path):
    path = tmp_path / "train.json"
    report.dump_json(REPORTS[0], path)

    actual = report.load_reports(path)

    assert actual == [REPORTS[0]]


def test_other_json_is_not_a_report(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('[{"name": "x"}]', encoding="utf-8")

    with pytest.raises(ValueError, match="Not an evaluation report"):
        report.load_reports(path)


class TestRunManifest:
    @staticmethod
    def test_manifest_records_the_run(tmp_path):
        data = tmp_path / "data.csv"
        data.write_text("a,b\n", encoding="utf-8")
        cfg = config.RunConfig(seed=5)

        actual = report.run_manifest(
            "ingest", cfg, inputs=[data], options={"x": 1}
        )

        assert actual["stage"] == "ingest"
        assert actual["seed"] == 5
        assert actual["config_hash"] == config.config_hash(cfg)
        assert actual["options"] == {"x": 1}
        assert actual["inputs"] == {
            str(data): hashlib.sha256(b"a,b\n").hexdigest()
        }
        assert actual["outputs"] == {}
        assert set(actual["versions"]) == {"smartses", "numpy", "pandas"}

    @staticmethod
    def test_manifests_are_reproducible(tmp_path):
        data = tmp_path / "data.csv"
        data.write_text("a,b\n", encoding="utf-8")

        first = report.run_manifest("x", config.RunConfig(), outputs=[data])
        second = report.run_manifest("x", config.RunConfig(), outputs=[data])

        assert first == second

    @staticmethod
    def test_checksums_follow_the_content(tmp_path):
        data = tmp_path / "data.csv"
        data.write_text("a\n", encoding="utf-8")
        before = report.run_manifest("x", config.RunConfig(), inputs=[data])
        data.write_text("b\n", encoding="utf-8")

        after = report.run_manifest("x", config.RunConfig(), inputs=[data])

        assert before["inputs"] != after["inputs"]


def test_detail_prefers_the_full_model():
    assert report.detail_report(REPORTS).method == "S2S-SG"
    assert report.detail_report(REPORTS[:2]).method == "S2S-S"
    assert report.detail_report(REPORTS[:1]).method == "Random Guess"
    assert report.detail_report([]) is None


def test_text_table_lists_every_method():
    actual = report.render_text(REPORTS)

    lines = actual.splitlines()
    assert lines[0].split() == [
        "method",
        "precision",
        "recall",
        "f1",
        "accuracy",
    ]
    assert [ln.split()[0] for ln in lines[1:4]] == [
        "Random",
        "S2S-S",
        "S2S-SG",
    ]
    assert "per class (S2S-SG)" in lines
    assert lines[-1].startswith("avg")
    assert lines[-1].split()[-1] == "6"


def test_confusion_table_escapes_class_names():
    evil = model.EvalReport(
        "x", ("<b>", "b", "c"), np.eye(3, dtype=np.int64)
    )

    actual = str(report.confusion_table(evil))

    assert "&lt;b&gt;" in actual
    assert "<b>" not in actual
    assert actual.count("<tr>") == 4


class TestRenderHTML:
    @staticmethod
    def test_builtin_template():
        output = io.StringIO()

        report.render_html(REPORTS, output, title="Run 1")

        html = output.getvalue()
        assert "<title>Run 1</title>" in html
        assert html.count('class="best"') == 1
        assert "Per class: S2S-SG" in html
        assert 'class="confusion"' in html
        assert "Training curve" in html

    @staticmethod
    def test_text_reports_work_without_jinja(monkeypatch):
        monkeypatch.setitem(sys.modules, "jinja2", None)

        text = report.render_text(REPORTS)

        assert "jinja2" not in vars(report)
        assert "S2S-SG" in text
        with pytest.raises(ImportError, match=r"smartses\[cli\]"):
            report.render_html(REPORTS, io.StringIO())

    @staticmethod
    def test_method_names_are_escaped():
        output = io.StringIO()
        evil = _report("<script>", [0, 0, 1, 1, 2, 2])

        report.render_html([evil], output)

        assert "<script>" not in output.getvalue()

    @staticmethod
    def test_custom_template(tmp_path):
        template = tmp_path / "mine.txt"
        template.write_text(
            "{% for row in rows %}{{ row.method }};{% endfor %}",
            encoding="utf-8",
        )
        output = io.StringIO()

        report.render_html(REPORTS, output, template=template)

        assert output.getvalue() == "Random Guess;S2S-S;S2S-SG;"
