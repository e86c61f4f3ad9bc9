# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "EvalReport",
    "confusion_matrix",
    "evaluate",
    "random_guess_baseline",
]

import collections.abc as cabc
import dataclasses
import io
import json
import typing as t

import numpy as np

from smartses.modeltypes import SESLevel

DEFAULT_CLASSES = tuple(str(level) for level in SESLevel)


def confusion_matrix(
    predictions: np.ndarray, labels: np.ndarray, n_classes: int
) -> np.ndarray:
    """Count ``(true, predicted)`` pairs; rows are the true classes."""
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (labels, predictions), 1)
    return matrix


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(
        num,
        den,
        out=np.zeros(num.shape, dtype=np.float64),
        where=den > 0,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class EvalReport:
    """Classification metrics of one method on one test set."""

    method: str
    classes: tuple[str, ...]
    confusion: np.ndarray
    loss_history: tuple[float, ...] = ()
    """Mean training loss of every epoch."""
    f1_history: tuple[float, ...] = ()
    """Held-out macro F1 after every epoch."""

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def precision(self) -> np.ndarray:
        tp = np.diag(self.confusion).astype(np.float64)
        return _safe_div(tp, self.confusion.sum(axis=0).astype(np.float64))

    @property
    def recall(self) -> np.ndarray:
        tp = np.diag(self.confusion).astype(np.float64)
        return _safe_div(tp, self.support.astype(np.float64))

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        return _safe_div(2 * p * r, p + r)

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EvalReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict[str, t.Any]:
        per_class = {
            name: {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
                "support": int(self.support[i]),
            }
            for i, name in enumerate(self.classes)
        }
        return {
            "method": self.method,
            "classes": list(self.classes),
            "per_class": per_class,
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "loss_history": list(self.loss_history),
            "f1_history": list(self.f1_history),
        }

    @classmethod
    def from_dict(cls, data: cabc.Mapping[str, t.Any]) -> EvalReport:
        return cls(
            data["method"],
            tuple(data["classes"]),
            np.asarray(data["confusion"], dtype=np.int64),
            tuple(data.get("loss_history", ())),
            tuple(data.get("f1_history", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Render one ``key: value`` metric per line."""
        lines = [f"method: {self.method}"]
        for i, name in enumerate(self.classes):
            lines.append(f"{name}.precision: {self.precision[i]:.6f}")
            lines.append(f"{name}.recall: {self.recall[i]:.6f}")
            lines.append(f"{name}.f1: {self.f1[i]:.6f}")
            lines.append(f"{name}.support: {self.support[i]}")
        lines.append(f"macro.precision: {self.macro_precision:.6f}")
        lines.append(f"macro.recall: {self.macro_recall:.6f}")
        lines.append(f"macro.f1: {self.macro_f1:.6f}")
        lines.append(f"accuracy: {self.accuracy:.6f}")
        for epoch, loss in enumerate(self.loss_history, start=1):
            lines.append(f"epoch.{epoch}.loss: {loss:.6f}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        """The confusion matrix as CSV, true classes in rows."""
        buf = io.StringIO()
        buf.write("true\\predicted," + ",".join(self.classes) + "\n")
        for name, row in zip(self.classes, self.confusion, strict=True):
            buf.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
        return buf.getvalue()


def evaluate(
    predictions: cabc.Sequence[int] | np.ndarray,
    labels: cabc.Sequence[int] | np.ndarray,
    *,
    classes: cabc.Sequence[str] = DEFAULT_CLASSES,
    method: str = "",
    loss_history: cabc.Iterable[float] = (),
    f1_history: cabc.Iterable[float] = (),
) -> EvalReport:
    """Compute per-class and macro precision, recall and F1.

    Macro values are the unweighted means over the classes. Precision
    and recall of a class that is never predicted, or never present,
    are 0.

    Raises
    ------
    ValueError
        If the inputs are empty, differ in length, or contain a class
        index outside of ``classes``.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("Predictions and labels must be equally long lists")
    if not len(pred):
        raise ValueError("Cannot evaluate zero predictions")
    n = len(classes)
    if min(pred.min(), true.min()) < 0 or max(pred.max(), true.max()) >= n:
        raise ValueError(f"Class index out of range 0..{n - 1}")
    return EvalReport(
        method,
        tuple(classes),
        confusion_matrix(pred, true, n),
        tuple(float(i) for i in loss_history),
        tuple(float(i) for i in f1_history),
    )


def random_guess_baseline(
    labels: cabc.Sequence[int] | np.ndarray,
    seed: int,
    *,
    classes: cabc.Sequence[str] = DEFAULT_CLASSES,
) -> EvalReport:
    """Evaluate a predictor that picks a uniformly random class."""
    rng = np.random.default_rng(seed)
    guesses = rng.integers(0, len(classes), size=len(labels))
    return evaluate(guesses, labels, classes=classes, method="Random Guess")
