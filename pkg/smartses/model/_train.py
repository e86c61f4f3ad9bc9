# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "TrainResult",
    "baseline_features",
    "evaluate_model",
    "load_model",
    "logistic_baseline",
    "make_batch",
    "predict",
    "save_model",
    "train",
]

import dataclasses
import logging
import os
import typing as t

import numpy as np

from smartses import config as _config
from smartses import helpers, nn
from smartses.config import ModelConfig
from smartses.features.general import NormalizationStats

from ._data import Dataset, stratified_split
from ._metrics import EvalReport, evaluate
from ._s2s import Batch, S2SModel

LOGGER = logging.getLogger(__name__)


def make_batch(
    dataset: Dataset,
    index: np.ndarray,
    stats: NormalizationStats,
) -> Batch:
    """Select rows of a dataset and normalize their general features."""
    return Batch(
        dataset.fm[index],
        dataset.fu[index],
        stats.transform(dataset.general[index]),
    )


def predict(model: S2SModel, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    """Predict the SES class of every sample.

    Ties between equally probable classes go to the lower class index.

    Returns
    -------
    tuple[numpy.ndarray, numpy.ndarray]
        The predicted classes and the full class probabilities.
    """
    probs = model.predict_proba(batch)
    return np.argmax(probs, axis=1), probs


def evaluate_model(
    model: S2SModel,
    dataset: Dataset,
    index: np.ndarray,
    stats: NormalizationStats,
    *,
    loss_history: t.Iterable[float] = (),
    f1_history: t.Iterable[float] = (),
) -> EvalReport:
    classes, _ = predict(model, make_batch(dataset, index, stats))
    return evaluate(
        classes,
        dataset.labels[index],
        method=model.config.variant.value,
        loss_history=loss_history,
        f1_history=f1_history,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class TrainResult:
    model: S2SModel
    stats: NormalizationStats
    """Normalization fitted on the training split."""
    report: EvalReport
    """Metrics on the held-out split after the last epoch."""
    train_index: np.ndarray
    test_index: np.ndarray


def train(
    dataset: Dataset,
    config: ModelConfig,
    *,
    seed: int = 0,
) -> TrainResult:
    """Train the fused classifier with mini-batch Adam.

    The data is split per class into training and held-out rows. After
    every epoch the mean training loss and the held-out macro F1 are
    recorded.

    Raises
    ------
    StratificationError
        If a class has too few users to appear in both splits.
    """
    train_index, test_index = stratified_split(
        dataset.labels,
        config.train_ratio,
        helpers.derive_seed(seed, "split"),
        n_classes=config.n_classes,
    )
    stats = NormalizationStats.fit(
        dataset.general[train_index], dataset.general_names
    )
    model = S2SModel(
        config,
        dataset.n_bins,
        dataset.general.shape[1],
        seed=helpers.derive_seed(seed, "init"),
    )
    LOGGER.info(
        "Training %r on %d users, holding out %d",
        model,
        len(train_index),
        len(test_index),
    )

    shuffle = np.random.default_rng(helpers.derive_seed(seed, "shuffle"))
    losses: list[float] = []
    f1s: list[float] = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(train_index)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            loss = model.loss_and_grad(
                make_batch(dataset, rows, stats), dataset.labels[rows]
            )
            if config.clip_norm is not None:
                nn.clip_by_global_norm(model.params, config.clip_norm)
            nn.adam_step(
                model.params,
                lr=config.lr,
                beta1=config.beta1,
                beta2=config.beta2,
                eps=config.eps,
            )
            total += loss * len(rows)
        losses.append(total / len(order))
        f1s.append(
            evaluate_model(model, dataset, test_index, stats).macro_f1
        )
        LOGGER.info(
            "Epoch %d/%d: loss %.4f, held-out macro F1 %.4f",
            epoch,
            config.epochs,
            losses[-1],
            f1s[-1],
        )

    report = evaluate_model(
        model,
        dataset,
        test_index,
        stats,
        loss_history=losses,
        f1_history=f1s,
    )
    return TrainResult(model, stats, report, train_index, test_index)


def baseline_features(
    dataset: Dataset, features: t.Literal["general", "full"] = "general"
) -> np.ndarray:
    """Input matrix of the non-sequential baselines.

    ``general`` uses the general features alone, ``full`` appends the
    day-part category shares of the sequences.
    """
    if features == "general":
        return dataset.general
    if features == "full":
        return np.hstack((dataset.general, dataset.summary))
    raise ValueError(f"Unknown baseline features: {features!r}")


def logistic_baseline(
    vectors: np.ndarray,
    labels: np.ndarray,
    train_index: np.ndarray,
    test_index: np.ndarray,
    *,
    n_classes: int = 3,
    lr: float = 0.05,
    epochs: int = 300,
    seed: int = 0,
    method: str = "Logistic Regression",
) -> EvalReport:
    """Multinomial logistic regression, trained full-batch with Adam.

    The inputs are z-scored with statistics of the training rows.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    names = tuple(f"x{i}" for i in range(vectors.shape[1]))
    stats = NormalizationStats.fit(vectors[train_index], names)
    x_train = stats.transform(vectors[train_index])
    y_train = labels[train_index]

    rng = np.random.default_rng(seed)
    store = nn.ParamStore()
    w = store.add(
        "w", nn.glorot_uniform(rng, (n_classes, vectors.shape[1]))
    )
    b = store.add("b", np.zeros(n_classes))
    for _ in range(epochs):
        store.zero_grad()
        logits, cache = nn.dense_forward(x_train, w.value, b.value)
        probs, _ = nn.softmax_xent(logits, y_train)
        _, dw, db = nn.dense_backward(
            nn.softmax_xent_backward(probs, y_train), cache
        )
        w.grad += dw
        b.grad += db
        nn.adam_step(store, lr=lr)

    logits, _ = nn.dense_forward(
        stats.transform(vectors[test_index]), w.value, b.value
    )
    return evaluate(
        np.argmax(logits, axis=1), labels[test_index], method=method
    )


def save_model(
    path: str | os.PathLike[str],
    model: S2SModel,
    stats: NormalizationStats,
) -> None:
    """Write a trained model and its normalization into a checkpoint."""
    nn.save_checkpoint(
        path,
        model.params,
        {
            "model": _config.to_dict(model.config),
            "n_bins": model.n_bins,
            "n_general": model.n_general,
            "normalization": stats.to_dict(),
        },
    )


def load_model(
    path: str | os.PathLike[str],
) -> tuple[S2SModel, NormalizationStats]:
    """Restore a model written by :func:`save_model`.

    Raises
    ------
    CheckpointError
        If the checkpoint lacks model metadata or its tensors do not
        fit the stored architecture.
    """
    ckpt = nn.load_checkpoint(path)
    try:
        config = _config.from_mapping({"model": ckpt.meta["model"]}).model
        model = S2SModel(
            config, int(ckpt.meta["n_bins"]), int(ckpt.meta["n_general"])
        )
        stats = NormalizationStats.from_dict(ckpt.meta["normalization"])
        model.params.load_state_dict(ckpt.tensors)
    except (KeyError, ValueError) as err:
        raise nn.CheckpointError(
            f"Checkpoint {os.fspath(path)} does not hold a model: {err}"
        ) from None
    return model, stats
