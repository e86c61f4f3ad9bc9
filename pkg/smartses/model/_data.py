# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
from __future__ import annotations

__all__ = [
    "Dataset",
    "StratificationError",
    "build_dataset",
    "stratified_split",
]

import collections.abc as cabc
import dataclasses
import logging

import numpy as np

from smartses.config import FeatureConfig
from smartses.context import UserLabel
from smartses.features import general, sequence

LOGGER = logging.getLogger(__name__)


class StratificationError(ValueError):
    """Raised if a class is too small to appear in both splits."""


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Model inputs and targets of all labelled users.

    Rows are ordered by card id. The general features are stored raw;
    normalization is fitted per training split.
    """

    card_ids: tuple[str, ...]
    fm: np.ndarray
    fu: np.ndarray
    general: np.ndarray
    general_names: tuple[str, ...]
    labels: np.ndarray
    summary: np.ndarray
    """Day-part category shares of every sequence."""

    def __post_init__(self) -> None:
        n = len(self.card_ids)
        for name in ("fm", "fu", "general", "labels", "summary"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"Dataset column {name} has the wrong length")

    def __len__(self) -> int:
        return len(self.card_ids)

    @property
    def n_bins(self) -> int:
        return self.fm.shape[1]

    def subset(self, index: np.ndarray) -> Dataset:
        return Dataset(
            tuple(self.card_ids[i] for i in index),
            self.fm[index],
            self.fu[index],
            self.general[index],
            self.general_names,
            self.labels[index],
            self.summary[index],
        )


def build_dataset(
    sequences: cabc.Mapping[str, sequence.SequenceFeature],
    features: cabc.Mapping[str, general.GeneralFeatures],
    labels: cabc.Mapping[str, UserLabel],
    config: FeatureConfig,
) -> Dataset:
    """Join the per-user artifacts on card id.

    Users missing from any of the three inputs are left out.
    """
    card_ids = sorted(set(sequences) & set(features) & set(labels))
    skipped = len(set(sequences) | set(features) | set(labels)) - len(
        card_ids
    )
    if skipped:
        LOGGER.warning("Skipping %d users with incomplete inputs", skipped)
    if not card_ids:
        raise ValueError("No user has sequences, features and a label")

    seqs = [sequences[c] for c in card_ids]
    fm, fu = sequence.stack_sequences(seqs)
    window = sequence.StudyWindow(
        config.start_date, config.days, config.bin_minutes
    )
    return Dataset(
        tuple(card_ids),
        fm,
        fu,
        np.stack(
            [general.raw_vector(features[c], config) for c in card_ids]
        ),
        general.vector_names(config),
        np.asarray([labels[c].ses.code for c in card_ids], dtype=np.int64),
        np.stack(
            [sequence.sequence_summary(s, window.bins_per_day) for s in seqs]
        ),
    )


def stratified_split(
    labels: np.ndarray,
    train_ratio: float,
    seed: int,
    *,
    n_classes: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Split row indices into training and test sets per class.

    Each class contributes ``round(n * train_ratio)`` rows to the
    training set, but always leaves at least one row on either side.

    Returns
    -------
    tuple[numpy.ndarray, numpy.ndarray]
        The sorted training and test indices.

    Raises
    ------
    StratificationError
        If a class has fewer than two members.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for cls in range(n_classes):
        members = np.flatnonzero(labels == cls)
        if len(members) < 2:
            raise StratificationError(
                f"Class {cls} has {len(members)} members,"
                " need at least 2 for a stratified split"
            )
        members = rng.permutation(members)
        cut = min(max(round(len(members) * train_ratio), 1), len(members) - 1)
        train.append(members[:cut])
        test.append(members[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
