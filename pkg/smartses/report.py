# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Rendering of evaluation reports and run manifests."""

from __future__ import annotations

__all__ = [
    "MethodRow",
    "ReportJSONEncoder",
    "comparison_rows",
    "confusion_table",
    "detail_report",
    "dump_json",
    "load_reports",
    "render_html",
    "render_text",
    "run_manifest",
]

import collections.abc as cabc
import dataclasses
import datetime
import enum
import hashlib
import importlib.metadata as imm
import json
import logging
import os
import pathlib
import typing as t

import markupsafe
import numpy as np

import smartses
from smartses import config as _config
from smartses import helpers
from smartses.model import EvalReport

LOGGER = logging.getLogger(__name__)

DEFAULT_TEMPLATE = "report.html.jinja"


class ReportJSONEncoder(json.JSONEncoder):
    """JSON encoder that knows the pipeline's result types."""

    def default(self, o: object) -> object:
        if isinstance(o, EvalReport):
            return o.to_dict()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, enum.Enum):
            return o.value
        if isinstance(o, datetime.date):
            return o.isoformat()
        if isinstance(o, os.PathLike):
            return os.fspath(o)
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        if isinstance(o, cabc.Mapping):
            return {str(k): v for k, v in o.items()}
        if isinstance(o, cabc.Set):
            return sorted(o)
        return super().default(o)


def dump_json(obj: t.Any, path: str | os.PathLike[str]) -> None:
    """Write an object as indented JSON with sorted keys."""
    text = json.dumps(obj, cls=ReportJSONEncoder, indent=2, sort_keys=True)
    with helpers.atomic_write(path) as file:
        file.write(text + "\n")


def _sha256(path: pathlib.Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _version(dist: str) -> str:
    try:
        return imm.version(dist)
    except imm.PackageNotFoundError:
        return "unknown"


def run_manifest(
    stage: str,
    config: _config.RunConfig,
    *,
    inputs: cabc.Iterable[str | os.PathLike[str]] = (),
    outputs: cabc.Iterable[str | os.PathLike[str]] = (),
    options: cabc.Mapping[str, t.Any] | None = None,
) -> dict[str, t.Any]:
    """Describe a stage run well enough to repeat it.

    The manifest holds the full configuration and its hash, the seed,
    the stage's own options, the package versions and checksums of all
    input and output files. It contains no timestamps.
    """
    return {
        "stage": stage,
        "seed": config.seed,
        "config_hash": _config.config_hash(config),
        "config": _config.to_dict(config),
        "options": dict(options or {}),
        "versions": {
            dist: _version(dist) for dist in ("smartses", "numpy", "pandas")
        },
        "inputs": {
            os.fspath(p): _sha256(pathlib.Path(p))
            for p in sorted(map(os.fspath, inputs))
        },
        "outputs": {
            os.fspath(p): _sha256(pathlib.Path(p))
            for p in sorted(map(os.fspath, outputs))
        },
    }


def load_reports(path: str | os.PathLike[str]) -> list[EvalReport]:
    """Load a JSON list of evaluation reports."""
    with open(path, encoding="utf-8") as file:
        data = json.load(file)
    if isinstance(data, dict):
        data = [data]
    try:
        return [EvalReport.from_dict(i) for i in data]
    except (KeyError, TypeError) as err:
        raise ValueError(f"Not an evaluation report file: {path}") from err


class MethodRow(t.NamedTuple):
    method: str
    precision: float
    recall: float
    f1: float
    accuracy: float


def comparison_rows(reports: cabc.Iterable[EvalReport]) -> list[MethodRow]:
    """One row of macro metrics per method, in the given order."""
    return [
        MethodRow(
            r.method,
            r.macro_precision,
            r.macro_recall,
            r.macro_f1,
            r.accuracy,
        )
        for r in reports
    ]


def detail_report(reports: cabc.Sequence[EvalReport]) -> EvalReport | None:
    """Pick the report that gets the per-class breakdown.

    This is the full fused model if present, otherwise the first model
    report, otherwise the first report.
    """
    for report in reports:
        if report.method == _config.Variant.SG.value:
            return report
    for report in reports:
        if report.method.startswith("S2S"):
            return report
    return reports[0] if reports else None


def render_text(reports: cabc.Sequence[EvalReport]) -> str:
    """Render the method comparison as a plain text table."""
    width = max([len("method")] + [len(r.method) for r in reports])
    lines = [
        f"{'method':<{width}}  precision  recall  f1      accuracy",
    ]
    for row in comparison_rows(reports):
        lines.append(
            f"{row.method:<{width}}  {row.precision:.4f}     "
            f"{row.recall:.4f}  {row.f1:.4f}  {row.accuracy:.4f}"
        )

    detail = detail_report(reports)
    if detail is not None:
        lines.extend(("", f"per class ({detail.method})"))
        cwidth = max(len("avg"), *(len(c) for c in detail.classes))
        lines.append(
            f"{'class':<{cwidth}}  precision  recall  f1      support"
        )
        for i, name in enumerate(detail.classes):
            lines.append(
                f"{name:<{cwidth}}  {detail.precision[i]:.4f}     "
                f"{detail.recall[i]:.4f}  {detail.f1[i]:.4f}  "
                f"{detail.support[i]}"
            )
        lines.append(
            f"{'avg':<{cwidth}}  {detail.macro_precision:.4f}     "
            f"{detail.macro_recall:.4f}  {detail.macro_f1:.4f}  "
            f"{int(detail.support.sum())}"
        )
    return "\n".join(lines) + "\n"


def confusion_table(report: EvalReport) -> markupsafe.Markup:
    """Render a confusion matrix as an HTML table."""
    head = markupsafe.Markup("").join(
        markupsafe.Markup("<th>{}</th>").format(c) for c in report.classes
    )
    rows = []
    for name, counts in zip(report.classes, report.confusion, strict=True):
        cells = markupsafe.Markup("").join(
            markupsafe.Markup("<td>{}</td>").format(int(v)) for v in counts
        )
        rows.append(
            markupsafe.Markup("<tr><th>{}</th>{}</tr>").format(name, cells)
        )
    return markupsafe.Markup(
        '<table class="confusion"><thead><tr><th>true \\ predicted</th>'
        "{}</tr></thead><tbody>{}</tbody></table>"
    ).format(head, markupsafe.Markup("").join(rows))


def render_html(
    reports: cabc.Sequence[EvalReport],
    output: t.IO[str],
    *,
    template: str | os.PathLike[str] | None = None,
    title: str = "SES classification report",
) -> None:
    """Render the reports into an HTML page.

    Parameters
    ----------
    reports
        The reports to compare.
    output
        The stream to write the page into.
    template
        Path to a custom Jinja template. The built-in template is used
        if not given.
    title
        Title of the page.
    """
    try:
        import jinja2
    except ImportError as err:
        raise ImportError(
            "HTML reports need the 'smartses[cli]' extra"
        ) from err

    loader: jinja2.BaseLoader
    if template is None:
        loader = jinja2.PackageLoader("smartses", "templates")
        name = DEFAULT_TEMPLATE
    else:
        path = pathlib.Path(template)
        loader = jinja2.FileSystemLoader(path.parent)
        name = path.name
    env = jinja2.Environment(
        loader=loader, autoescape=jinja2.select_autoescape(default=True)
    )
    env.globals["confusion_table"] = confusion_table
    rows = comparison_rows(reports)
    best = max((r.f1 for r in rows), default=None)
    env.get_template(name).stream(
        title=title,
        rows=rows,
        best=best,
        detail=detail_report(reports),
        version=smartses.__version__,
    ).dump(output)
