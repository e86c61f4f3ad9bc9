# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""The ``smartses`` command line.

Every subcommand runs one pipeline stage. Stages only communicate
through the files in the output directory, and every stage leaves a
``<stage>.manifest.json`` there that records how it was run::

    smartses synth --agents 1000 --days 8 --seed 7 --out run
    smartses ingest --out run
    smartses label --out run
    smartses features --out run
    smartses train --variant S2S-SG --out run
    smartses eval --out run
    smartses report --out run
"""

from __future__ import annotations

__all__ = ["main"]

import collections.abc as cabc
import dataclasses
import functools
import logging
import os
import pathlib
import re
import typing as t

import click
import numpy as np
import pandas as pd

import smartses
from smartses import cli_helpers, context, helpers, ingest, model, nn
from smartses import config as _config
from smartses import report as _report
from smartses import synth as _synth
from smartses.features import general, sequence
from smartses.modeltypes import StationFunction, StationRole

LOGGER = logging.getLogger(__name__)

TRIPS_FILE = "trips.csv"
REJECTS_FILE = "rejects.csv"
INGEST_STATS_FILE = "ingest-stats.json"
PROFILES_FILE = "station-profiles.csv"
LABELS_FILE = "labels.csv"
LABEL_STATS_FILE = "label-stats.json"
GENERAL_FILE = "general.csv"
SEQUENCES_FILE = "sequences.txt"
SPLIT_FILE = "split.csv"
EVAL_JSON_FILE = "eval-report.json"
EVAL_TEXT_FILE = "eval-report.txt"
GRADCHECK_FILE = "gradcheck.txt"
REPORT_TEXT_FILE = "report.txt"
REPORT_HTML_FILE = "report.html"

_VERBOSITY = (logging.WARNING, logging.INFO, logging.DEBUG)


def slug(method: str) -> str:
    """Turn a method name into a file name component."""
    return re.sub(r"[^a-z0-9]+", "-", method.lower()).strip("-")


@dataclasses.dataclass(frozen=True)
class _Run:
    """The resolved settings of one stage invocation."""

    stage: str
    config: _config.RunConfig
    out: pathlib.Path

    def path(self, name: str) -> pathlib.Path:
        return self.out / name

    def require(self, *paths: pathlib.Path) -> None:
        for path in paths:
            if not path.is_file():
                raise click.ClickException(
                    f"{self.stage}: Missing input file: {path}"
                )

    def write_manifest(
        self,
        *,
        inputs: cabc.Iterable[pathlib.Path] = (),
        outputs: cabc.Iterable[pathlib.Path] = (),
        options: cabc.Mapping[str, t.Any] | None = None,
    ) -> pathlib.Path:
        path = self.path(f"{self.stage}.manifest.json")
        _report.dump_json(
            _report.run_manifest(
                self.stage,
                self.config,
                inputs=inputs,
                outputs=outputs,
                options=options,
            ),
            path,
        )
        return path


def _stage(name: str) -> cabc.Callable[[t.Any], t.Any]:
    """Turn a stage function into a click command with the run options.

    The wrapped function receives a :class:`_Run` as first argument.
    ``ValueError`` and ``OSError`` escaping from it are reported as
    ``"<stage>: <cause>"`` with exit code 1.
    """

    def decorator(func: cabc.Callable[..., None]) -> click.Command:
        @functools.wraps(func)
        def wrapper(
            config_file: _config.RunConfig | None,
            seed: int | None,
            threads: int | None,
            days: int | None,
            out: pathlib.Path,
            overrides: tuple[str, ...],
            verbose: int,
            **kwargs: t.Any,
        ) -> None:
            logging.basicConfig(level=_VERBOSITY[min(verbose, 2)])
            try:
                config = config_file or cli_helpers.loadconfig(None)
                config = _config.apply_overrides(config, overrides)
                if seed is not None:
                    config = dataclasses.replace(config, seed=seed)
                if threads is not None:
                    config = dataclasses.replace(config, threads=threads)
                if days is not None:
                    config = config.with_days(days)
            except (_config.ConfigError, OSError) as err:
                raise click.BadParameter(str(err)) from None

            try:
                out.mkdir(parents=True, exist_ok=True)
                func(_Run(name, config, out), **kwargs)
            except click.ClickException:
                raise
            except (ValueError, OSError) as err:
                LOGGER.debug("Stage %s failed", name, exc_info=True)
                raise click.ClickException(f"{name}: {err}") from None

        options = (
            click.option(
                "-c",
                "--config",
                "config_file",
                type=cli_helpers.ConfigCLI(),
                help="YAML run configuration. Defaults to config.yml in"
                " the user configuration directory, if it exists.",
            ),
            click.option("--seed", type=int, help="Top-level random seed."),
            click.option(
                "--threads",
                type=click.IntRange(min=1),
                help="Worker processes; 1 is bit-reproducible.",
            ),
            click.option(
                "--days",
                type=click.IntRange(min=1),
                help="Length of the study window; sets population.days and"
                " features.days together.",
            ),
            click.option(
                "-o",
                "--out",
                type=click.Path(file_okay=False, path_type=pathlib.Path),
                default=pathlib.Path("."),
                show_default=True,
                help="Directory holding the stage inputs and outputs.",
            ),
            click.option(
                "--set",
                "overrides",
                type=cli_helpers.OverrideCLI(),
                multiple=True,
                help="Override a configuration key, e.g."
                " model.lstm_hidden=32. Can be given multiple times.",
            ),
            click.option(
                "-v",
                "--verbose",
                count=True,
                help="Log more; give twice for debug output.",
            ),
        )
        command = wrapper
        for option in reversed(options):
            command = option(command)
        return main.command(name)(command)

    return decorator


@click.group()
@click.version_option(smartses.__version__, prog_name="smartses")
def main() -> None:
    """Estimate the socioeconomic status of transit riders."""


@_stage("synth")
@click.option("--agents", type=click.IntRange(min=0), help="Number of agents.")
def _synth_stage(run: _Run, agents: int | None) -> None:
    """Generate a synthetic city, its riders and their fare records."""
    if not run.config.windows_agree:
        pop, feat = run.config.population, run.config.features
        raise ValueError(
            f"population covers {pop.days} days from {pop.start_date},"
            f" but features cover {feat.days} days from"
            f" {feat.start_date}; set both or use --days"
        )
    population = run.config.population
    if agents is not None:
        population = dataclasses.replace(population, n_agents=agents)
    data = _synth.synthesize(
        run.config.city,
        population,
        run.config.seed_for("synth"),
        threads=run.config.threads,
    )
    written = _synth.write_synthetic(data, run.out)
    run.write_manifest(
        outputs=written.values(), options={"agents": agents}
    )
    click.echo(
        f"Wrote {len(data.records)} records of {len(data.agents)} agents"
        f" to {run.path(_synth.RECORDS_FILE)}"
    )


@_stage("ingest")
@click.option(
    "--records",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Raw fare records. Defaults to records.csv in the output dir.",
)
@click.option(
    "--stations",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Station registry. Defaults to stations.csv in the output dir.",
)
def _ingest_stage(
    run: _Run, records: pathlib.Path | None, stations: pathlib.Path | None
) -> None:
    """Parse fare records and reconstruct the trips of frequent users."""
    records = records or run.path(_synth.RECORDS_FILE)
    stations = stations or run.path(_synth.STATIONS_FILE)
    run.require(records, stations)
    cfg = run.config.ingest

    registry = ingest.StationRegistry.load(stations)
    with records.open("rb") as file:
        parsed = ingest.parse_records(
            file, registry, delimiter=cfg.delimiter
        )
    histories = ingest.build_histories(
        parsed.records, threads=run.config.threads
    )
    stats = ingest.ingest_stats(histories, min_days=cfg.min_days)
    frequent = ingest.filter_frequent_users(histories, cfg.min_days)

    outputs = [
        run.path(TRIPS_FILE),
        run.path(REJECTS_FILE),
        run.path(INGEST_STATS_FILE),
    ]
    n_trips = ingest.write_trips(frequent, outputs[0])
    ingest.write_rejects(parsed.rejects, outputs[1])
    _report.dump_json(
        {
            **dataclasses.asdict(stats),
            "n_rejected": parsed.n_rejected,
            "n_frequent_users": len(frequent),
        },
        outputs[2],
    )
    run.write_manifest(inputs=(records, stations), outputs=outputs)
    click.echo(
        f"Kept {len(frequent)} of {len(histories)} users"
        f" with {n_trips} trips, rejected {parsed.n_rejected} lines"
    )


@_stage("label")
@click.option(
    "--communities",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Housing communities. Defaults to communities.csv in the"
    " output dir.",
)
@click.option(
    "--pois",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Points of interest. Defaults to pois.csv in the output dir.",
)
@click.option(
    "--stations",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Station registry. Defaults to stations.csv in the output dir.",
)
def _label_stage(
    run: _Run,
    communities: pathlib.Path | None,
    pois: pathlib.Path | None,
    stations: pathlib.Path | None,
) -> None:
    """Classify stations and give every frequent user an SES label."""
    trips = run.path(TRIPS_FILE)
    communities = communities or run.path(_synth.COMMUNITIES_FILE)
    pois = pois or run.path(_synth.POIS_FILE)
    stations = stations or run.path(_synth.STATIONS_FILE)
    run.require(trips, communities, pois, stations)
    cfg = run.config.context

    registry = ingest.StationRegistry.load(stations)
    histories = ingest.load_histories(trips)
    poi_mix = context.attach_pois(
        context.load_pois(pois), registry, cfg.poi_radius_km
    )
    profiles = context.build_station_profiles(
        histories,
        registry,
        context.load_communities(communities),
        poi_mix,
        cfg,
    )
    result = context.label_users(histories, profiles, cfg)

    outputs = [
        run.path(PROFILES_FILE),
        run.path(LABELS_FILE),
        run.path(LABEL_STATS_FILE),
    ]
    context.write_station_profiles(profiles, outputs[0])
    context.write_labels(result.labels, outputs[1])
    _report.dump_json(
        {
            "n_labeled": len(result.labels),
            "thresholds": result.thresholds._asdict(),
            "shares": {str(k): v for k, v in result.shares().items()},
            "dropped": result.dropped,
        },
        outputs[2],
    )
    run.write_manifest(
        inputs=(trips, communities, pois, stations), outputs=outputs
    )
    click.echo(
        f"Labeled {len(result.labels)} users, dropped {len(result.dropped)}"
    )


@_stage("features")
@click.option(
    "--stations",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Station registry. Defaults to stations.csv in the output dir.",
)
def _features_stage(run: _Run, stations: pathlib.Path | None) -> None:
    """Compute general and sequence features of all labeled users."""
    trips = run.path(TRIPS_FILE)
    profiles_file = run.path(PROFILES_FILE)
    labels_file = run.path(LABELS_FILE)
    stations = stations or run.path(_synth.STATIONS_FILE)
    run.require(trips, profiles_file, labels_file, stations)
    cfg = run.config.features

    coords = ingest.StationRegistry.load(stations).coord_map()
    functions = {
        i: p.function
        for i, p in context.load_station_profiles(profiles_file).items()
    }
    labels = {lb.card_id: lb for lb in context.load_labels(labels_file)}
    window = sequence.StudyWindow(cfg.start_date, cfg.days, cfg.bin_minutes)

    general_features: dict[str, general.GeneralFeatures] = {}
    sequences: dict[str, sequence.SequenceFeature] = {}
    skipped = 0
    outside = 0
    for history in ingest.load_histories(trips):
        label = labels.get(history.card_id)
        if label is None:
            continue
        outside += sum(
            1
            for trip in history.trips
            if window.bin_of(trip.date, trip.board_time) is None
        )
        roles = context.infer_user_station_roles(
            history,
            label.home_station,
            min_visits=run.config.context.work_min_visits,
        )
        try:
            locations = sequence.assign_bin_locations(
                history, window, gap_first_half=cfg.gap_first_half
            )
        except general.EmptyHistoryError as err:
            LOGGER.debug("%s", err)
            skipped += 1
            continue
        sequences[history.card_id] = sequence.build_sequence(
            locations, functions, roles
        )
        general_features[history.card_id] = (
            general.compute_general_features(history, coords, cfg)
        )
    if skipped:
        LOGGER.warning(
            "Skipped %d users without trips in the study window", skipped
        )
    if outside:
        LOGGER.warning(
            "%d trips lie outside the study window of %d days from %s;"
            " pass the same --days to synth and features",
            outside,
            window.days,
            window.start_date,
        )
    if not sequences:
        raise ValueError("No labeled user has trips in the study window")

    outputs = [run.path(GENERAL_FILE), run.path(SEQUENCES_FILE)]
    general.write_general_features(general_features, outputs[0])
    sequence.write_sequences(sequences, outputs[1])
    run.write_manifest(
        inputs=(trips, profiles_file, labels_file, stations),
        outputs=outputs,
    )
    click.echo(
        f"Wrote features of {len(sequences)} users"
        f" with {window.n_bins} bins each"
    )


def _load_dataset(run: _Run) -> tuple[model.Dataset, list[pathlib.Path]]:
    inputs = [
        run.path(SEQUENCES_FILE),
        run.path(GENERAL_FILE),
        run.path(LABELS_FILE),
    ]
    run.require(*inputs)
    dataset = model.build_dataset(
        sequence.load_sequences(inputs[0]),
        general.load_general_features(inputs[1]),
        {lb.card_id: lb for lb in context.load_labels(inputs[2])},
        run.config.features,
    )
    return dataset, inputs


@_stage("train")
@click.option(
    "--variant",
    type=click.Choice([v.value for v in _config.Variant]),
    help="Which branches to train. Defaults to model.variant.",
)
def _train_stage(run: _Run, variant: str | None) -> None:
    """Train the fused classifier and save a checkpoint."""
    dataset, inputs = _load_dataset(run)
    cfg = run.config.model
    if variant is not None:
        cfg = dataclasses.replace(cfg, variant=_config.Variant(variant))
    result = model.train(dataset, cfg, seed=run.config.seed_for("train"))

    name = slug(cfg.variant.value)
    outputs = [
        run.path(f"model-{name}.ckpt"),
        run.path(f"train-{name}.json"),
        run.path(SPLIT_FILE),
    ]
    model.save_model(outputs[0], result.model, result.stats)
    _report.dump_json(result.report, outputs[1])
    split = pd.DataFrame(
        {
            "card_id": list(dataset.card_ids),
            "split": "train",
        }
    )
    split.loc[result.test_index, "split"] = "test"
    with helpers.atomic_write(outputs[2], newline="") as file:
        split.to_csv(file, index=False, lineterminator="\n")
    run.write_manifest(
        inputs=inputs,
        outputs=outputs,
        options={"variant": cfg.variant.value},
    )
    click.echo(
        f"{cfg.variant.value}: held-out macro F1"
        f" {result.report.macro_f1:.4f}"
    )


def _test_index(run: _Run, dataset: model.Dataset) -> np.ndarray:
    path = run.path(SPLIT_FILE)
    run.require(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if set(frame.columns) != {"card_id", "split"}:
        raise ValueError(f"Not a split file: {path}")
    position = {c: i for i, c in enumerate(dataset.card_ids)}
    index = [
        position[c]
        for c in frame.loc[frame["split"] == "test", "card_id"]
        if c in position
    ]
    if not index:
        raise ValueError(f"No held-out user of {path} has features")
    return np.asarray(sorted(index), dtype=np.int64)


def _histories(path: pathlib.Path) -> dict[str, tuple[float, ...]]:
    if not path.is_file():
        return {}
    loaded = _report.load_reports(path)[0]
    return {
        "loss_history": loaded.loss_history,
        "f1_history": loaded.f1_history,
    }


@_stage("eval")
@click.option(
    "-m",
    "--model",
    "checkpoints",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    multiple=True,
    help="Checkpoints to evaluate. Defaults to all model-*.ckpt files"
    " in the output dir.",
)
def _eval_stage(run: _Run, checkpoints: tuple[pathlib.Path, ...]) -> None:
    """Evaluate trained models and the baselines on the held-out users."""
    dataset, inputs = _load_dataset(run)
    test_index = _test_index(run, dataset)
    inputs.append(run.path(SPLIT_FILE))
    train_mask = np.ones(len(dataset), dtype=bool)
    train_mask[test_index] = False
    train_index = np.flatnonzero(train_mask)

    if not checkpoints:
        checkpoints = tuple(sorted(run.out.glob("model-*.ckpt")))
    run.require(*checkpoints)
    reports: list[model.EvalReport] = []
    for path in checkpoints:
        trained, stats = model.load_model(path)
        history = _histories(
            path.with_name(path.name.replace("model-", "train-", 1))
            .with_suffix(".json")
        )
        reports.append(
            model.evaluate_model(
                trained, dataset, test_index, stats, **history
            )
        )
        inputs.append(path)

    labels = dataset.labels
    reports.append(
        model.random_guess_baseline(
            labels[test_index], run.config.seed_for("random-guess")
        )
    )
    for kind in ("general", "full"):
        reports.append(
            model.logistic_baseline(
                model.baseline_features(dataset, kind),
                labels,
                train_index,
                test_index,
                n_classes=run.config.model.n_classes,
                seed=run.config.seed_for(f"logistic-{kind}"),
                method=f"Logistic Regression ({kind})",
            )
        )

    outputs = [run.path(EVAL_JSON_FILE), run.path(EVAL_TEXT_FILE)]
    _report.dump_json(reports, outputs[0])
    with helpers.atomic_write(outputs[1]) as file:
        file.write(_report.render_text(reports))
        for r in reports:
            file.write(f"\n# {r.method}\n{r.to_text()}")
    for r in reports:
        path = run.path(f"confusion-{slug(r.method)}.csv")
        with helpers.atomic_write(path) as file:
            file.write(r.confusion_csv())
        outputs.append(path)
    run.write_manifest(inputs=inputs, outputs=outputs)
    click.echo(_report.render_text(reports), nl=False)


@_stage("gradcheck")
@click.option(
    "--samples",
    type=click.IntRange(min=1),
    default=5,
    show_default=True,
    help="Batch size of the check.",
)
@click.option(
    "--tolerance",
    type=click.FloatRange(min=0, min_open=True),
    default=1e-4,
    show_default=True,
)
def _gradcheck_stage(run: _Run, samples: int, tolerance: float) -> None:
    """Verify the model gradients against finite differences.

    The check runs on a tiny model with 8 bins, LSTM width 4 and fusion
    width 4. Variant and pooling follow the configuration.
    """
    n_bins, n_general = 8, 4
    cfg = dataclasses.replace(
        run.config.model,
        embed_time=3,
        embed_fm=2,
        embed_fu=2,
        lstm_hidden=4,
        seq_dense=4,
        general_dense=4,
        fusion=4,
    )
    rng = np.random.default_rng(run.config.seed_for("gradcheck"))
    batch = model.Batch(
        rng.integers(0, len(StationFunction), (samples, n_bins)),
        rng.integers(0, len(StationRole), (samples, n_bins)),
        rng.normal(size=(samples, n_general)),
    )
    labels = rng.integers(0, cfg.n_classes, samples)
    tiny = model.S2SModel(
        cfg, n_bins, n_general, seed=run.config.seed_for("init")
    )
    result = nn.grad_check(
        lambda: tiny.loss_and_grad(batch, labels),
        tiny.params,
        tolerance=tolerance,
    )

    output = run.path(GRADCHECK_FILE)
    with helpers.atomic_write(output) as file:
        file.write(result.to_text())
    run.write_manifest(
        outputs=[output],
        options={"samples": samples, "tolerance": tolerance},
    )
    click.echo(result.to_text(), nl=False)
    if not result.passed:
        assert result.worst is not None
        name, error = result.worst
        raise click.ClickException(
            f"gradcheck: {name} has relative error {error:.3e}"
        )


@_stage("report")
@click.option(
    "--reports",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Evaluation reports. Defaults to eval-report.json in the"
    " output dir.",
)
@click.option(
    "-t",
    "--template",
    type=click.Path(dir_okay=False, exists=True, path_type=pathlib.Path),
    help="An optional custom template to render.",
)
def _report_stage(
    run: _Run,
    reports: pathlib.Path | None,
    template: pathlib.Path | None,
) -> None:
    """Render the method comparison as text and HTML."""
    reports = reports or run.path(EVAL_JSON_FILE)
    run.require(reports)
    loaded = _report.load_reports(reports)
    if not loaded:
        raise ValueError(f"No reports in {reports}")

    outputs = [run.path(REPORT_TEXT_FILE), run.path(REPORT_HTML_FILE)]
    with helpers.atomic_write(outputs[0]) as file:
        file.write(_report.render_text(loaded))
    with helpers.atomic_write(outputs[1]) as file:
        _report.render_html(loaded, file, template=template)
    run.write_manifest(
        inputs=[reports],
        outputs=outputs,
        options={"template": os.fspath(template) if template else None},
    )
    click.echo(f"Wrote {outputs[0]} and {outputs[1]}")


if __name__ == "__main__":
    main()
