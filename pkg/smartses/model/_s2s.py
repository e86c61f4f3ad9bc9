# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""The two-branch sequence plus general feature classifier.

The sequence branch embeds every time bin's position, station function
and user role, runs an LSTM over the bins and condenses the pooled
hidden states through two dense layers. The general branch condenses
the normalized general feature vector through two dense layers. Both
branch outputs are weighted element-wise, summed and mapped to the
class logits.
"""

from __future__ import annotations

__all__ = ["Batch", "ForwardTrace", "S2SModel"]

import dataclasses
import logging
import typing as t

import numpy as np

from smartses import nn
from smartses.config import ModelConfig, Pooling
from smartses.modeltypes import StationFunction, StationRole

LOGGER = logging.getLogger(__name__)


class Batch(t.NamedTuple):
    fm: np.ndarray | None
    """Station function ids, shape ``(batch, bins)``."""
    fu: np.ndarray | None
    """User role ids, shape ``(batch, bins)``."""
    general: np.ndarray | None
    """Normalized general features, shape ``(batch, features)``."""

    @property
    def size(self) -> int:
        """Number of samples in the batch."""
        for part in (self.fm, self.general):
            if part is not None:
                return part.shape[0]
        return 0


@dataclasses.dataclass
class ForwardTrace:
    """Intermediate values of one forward pass."""

    batch: Batch
    logits: np.ndarray
    probs: np.ndarray
    fused: np.ndarray
    y_s: np.ndarray | None = None
    y_g: np.ndarray | None = None
    caches: dict[str, t.Any] = dataclasses.field(default_factory=dict)


class S2SModel:
    """The fused classifier and its parameters.

    Only the parameters of the branches used by the configured variant
    are created.

    Parameters
    ----------
    config
        Architecture settings.
    n_bins
        Number of time bins of every sequence.
    n_general
        Width of the general feature vector.
    seed
        Seeds the parameter initialization.
    """

    def __init__(
        self,
        config: ModelConfig,
        n_bins: int,
        n_general: int,
        *,
        seed: int = 0,
    ) -> None:
        variant = config.variant
        if variant.uses_sequence and n_bins < 1:
            raise nn.ShapeError("The sequence branch needs at least one bin")
        if variant.uses_general and n_general < 1:
            raise nn.ShapeError("The general branch needs features")
        self.config = config
        self.n_bins = n_bins
        self.n_general = n_general
        self.params = nn.ParamStore()

        rng = np.random.default_rng(seed)
        add = self.params.add
        hidden = config.lstm_hidden
        if variant.uses_sequence:
            add(
                "embed.time",
                nn.glorot_uniform(rng, (n_bins, config.embed_time)),
            )
            add(
                "embed.fm",
                nn.glorot_uniform(
                    rng, (len(StationFunction), config.embed_fm)
                ),
            )
            add(
                "embed.fu",
                nn.glorot_uniform(rng, (len(StationRole), config.embed_fu)),
            )
            add("lstm.wx", nn.glorot_uniform(rng, (4 * hidden, self.n_in)))
            add("lstm.wh", nn.glorot_uniform(rng, (4 * hidden, hidden)))
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0
            add("lstm.b", bias)
            add(
                "seq.w_hs",
                nn.glorot_uniform(rng, (config.seq_dense, self.pooled_width)),
            )
            add("seq.b_hs", np.zeros(config.seq_dense))
            add(
                "seq.w_s",
                nn.glorot_uniform(rng, (config.fusion, config.seq_dense)),
            )
            add("seq.b_s", np.zeros(config.fusion))
            add("fuse.v_s", np.ones(config.fusion))
        if variant.uses_general:
            add(
                "gen.w_hg",
                nn.glorot_uniform(rng, (config.general_dense, n_general)),
            )
            add("gen.b_hg", np.zeros(config.general_dense))
            add(
                "gen.w_g",
                nn.glorot_uniform(rng, (config.fusion, config.general_dense)),
            )
            add("gen.b_g", np.zeros(config.fusion))
            add("fuse.v_g", np.ones(config.fusion))
        add("out.w", nn.glorot_uniform(rng, (config.n_classes, config.fusion)))
        add("out.b", np.zeros(config.n_classes))
        LOGGER.debug(
            "Created %s model with %d parameters",
            variant.value,
            self.params.size,
        )

    def __repr__(self) -> str:
        return (
            f"<{type(self).__name__} {self.config.variant.value}"
            f" bins={self.n_bins} general={self.n_general}"
            f" params={self.params.size}>"
        )

    @property
    def n_in(self) -> int:
        """Width of one LSTM input step."""
        c = self.config
        return c.embed_time + c.embed_fm + c.embed_fu

    @property
    def pooled_width(self) -> int:
        if self.config.seq_pooling is Pooling.CONCAT:
            return self.n_bins * self.config.lstm_hidden
        return self.config.lstm_hidden

    def _check_batch(self, batch: Batch) -> int:
        size = batch.size
        if self.config.variant.uses_sequence:
            if batch.fm is None or batch.fu is None:
                raise nn.ShapeError("This variant needs sequence inputs")
            nn.check_shape("fm", batch.fm, (size, self.n_bins))
            nn.check_shape("fu", batch.fu, (size, self.n_bins))
        if self.config.variant.uses_general:
            if batch.general is None:
                raise nn.ShapeError("This variant needs general features")
            nn.check_shape("general", batch.general, (size, self.n_general))
        return size

    def forward(self, batch: Batch) -> ForwardTrace:
        """Run the model on a batch."""
        size = self._check_batch(batch)
        p = self.params
        caches: dict[str, t.Any] = {}
        fused = np.zeros((size, self.config.fusion))
        y_s = y_g = None

        if self.config.variant.uses_sequence:
            assert batch.fm is not None and batch.fu is not None
            time = np.broadcast_to(
                p["embed.time"].value,
                (size, self.n_bins, self.config.embed_time),
            )
            xe = np.concatenate(
                (
                    time,
                    nn.embed_forward(p["embed.fm"].value, batch.fm),
                    nn.embed_forward(p["embed.fu"].value, batch.fu),
                ),
                axis=2,
            )
            hs, caches["lstm"] = nn.lstm_forward(
                xe, p["lstm.wx"].value, p["lstm.wh"].value, p["lstm.b"].value
            )
            pooling = self.config.seq_pooling
            if pooling is Pooling.CONCAT:
                pooled = hs.reshape(size, -1)
            elif pooling is Pooling.LAST:
                pooled = hs[:, -1]
            else:
                pooled = hs.mean(axis=1)
            h_s, caches["seq.hs"] = nn.dense_forward(
                pooled, p["seq.w_hs"].value, p["seq.b_hs"].value, "relu"
            )
            y_s, caches["seq.s"] = nn.dense_forward(
                h_s, p["seq.w_s"].value, p["seq.b_s"].value, "tanh"
            )
            fused += p["fuse.v_s"].value * y_s

        if self.config.variant.uses_general:
            assert batch.general is not None
            h_g, caches["gen.hg"] = nn.dense_forward(
                batch.general, p["gen.w_hg"].value, p["gen.b_hg"].value, "relu"
            )
            y_g, caches["gen.g"] = nn.dense_forward(
                h_g, p["gen.w_g"].value, p["gen.b_g"].value, "tanh"
            )
            fused += p["fuse.v_g"].value * y_g

        logits, caches["out"] = nn.dense_forward(
            fused, p["out.w"].value, p["out.b"].value
        )
        return ForwardTrace(
            batch, logits, nn.softmax(logits), fused, y_s, y_g, caches
        )

    def backward(self, trace: ForwardTrace, dlogits: np.ndarray) -> None:
        """Accumulate the parameter gradients of a forward pass."""
        p = self.params
        caches = trace.caches
        dfused, dw, db = nn.dense_backward(dlogits, caches["out"])
        p["out.w"].grad += dw
        p["out.b"].grad += db

        if trace.y_g is not None:
            p["fuse.v_g"].grad += (dfused * trace.y_g).sum(axis=0)
            dy_g = dfused * p["fuse.v_g"].value
            dh_g, dw, db = nn.dense_backward(dy_g, caches["gen.g"])
            p["gen.w_g"].grad += dw
            p["gen.b_g"].grad += db
            _, dw, db = nn.dense_backward(dh_g, caches["gen.hg"])
            p["gen.w_hg"].grad += dw
            p["gen.b_hg"].grad += db

        if trace.y_s is not None:
            p["fuse.v_s"].grad += (dfused * trace.y_s).sum(axis=0)
            dy_s = dfused * p["fuse.v_s"].value
            dh_s, dw, db = nn.dense_backward(dy_s, caches["seq.s"])
            p["seq.w_s"].grad += dw
            p["seq.b_s"].grad += db
            dpooled, dw, db = nn.dense_backward(dh_s, caches["seq.hs"])
            p["seq.w_hs"].grad += dw
            p["seq.b_hs"].grad += db

            size = dpooled.shape[0]
            hidden = self.config.lstm_hidden
            pooling = self.config.seq_pooling
            if pooling is Pooling.CONCAT:
                dhs = dpooled.reshape(size, self.n_bins, hidden)
            elif pooling is Pooling.LAST:
                dhs = np.zeros((size, self.n_bins, hidden))
                dhs[:, -1] = dpooled
            else:
                dhs = np.repeat(
                    dpooled[:, None, :] / self.n_bins, self.n_bins, axis=1
                )
            dxe, dwx, dwh, db = nn.lstm_backward(dhs, caches["lstm"])
            p["lstm.wx"].grad += dwx
            p["lstm.wh"].grad += dwh
            p["lstm.b"].grad += db

            e_t = self.config.embed_time
            e_fm = self.config.embed_fm
            p["embed.time"].grad += dxe[:, :, :e_t].sum(axis=0)
            batch = trace.batch
            nn.embed_backward(
                p["embed.fm"].grad, batch.fm, dxe[:, :, e_t : e_t + e_fm]
            )
            nn.embed_backward(
                p["embed.fu"].grad, batch.fu, dxe[:, :, e_t + e_fm :]
            )

    def loss_and_grad(self, batch: Batch, labels: np.ndarray) -> float:
        """Compute the mean cross-entropy and fill in all gradients.

        Existing gradients are discarded.
        """
        self.params.zero_grad()
        trace = self.forward(batch)
        probs, loss = nn.softmax_xent(trace.logits, labels)
        self.backward(trace, nn.softmax_xent_backward(probs, labels))
        return loss

    def predict_proba(self, batch: Batch) -> np.ndarray:
        """Class probabilities, shape ``(batch, classes)``."""
        return self.forward(batch).probs
