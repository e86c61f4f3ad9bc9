# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Configuration of all pipeline stages.

Every stage reads its tunables from one frozen dataclass. A
:class:`RunConfig` bundles them together with the top-level seed, and
can be loaded from and dumped to YAML:

.. code-block:: yaml

   seed: 7
   context:
     threshold_mode: quantile
   model:
     lstm_hidden: 32
     seq_pooling: mean

Keys that are not part of the configuration are rejected with a
:class:`ConfigError` instead of being silently ignored.
"""

from __future__ import annotations

__all__ = [
    "CityConfig",
    "ConfigError",
    "ContextConfig",
    "FeatureConfig",
    "IngestConfig",
    "ModelConfig",
    "PopulationConfig",
    "RunConfig",
    "Pooling",
    "Variant",
    "apply_overrides",
    "config_hash",
    "derive_seed",
    "dump_config",
    "from_mapping",
    "load_config",
    "to_dict",
]

import collections.abc as cabc
import dataclasses
import datetime
import enum
import hashlib
import json
import logging
import math
import os
import types
import typing as t

import yaml

from smartses.helpers import derive_seed

LOGGER = logging.getLogger(__name__)

FileOrPath = str | os.PathLike[t.Any] | t.IO[str]


class ConfigError(ValueError):
    """Raised for unknown keys or invalid values in a configuration."""


class Variant(enum.Enum):
    """Which branches of the fused classifier are active."""

    SG = "S2S-SG"
    S = "S2S-S"
    G = "S2S-G"

    @property
    def uses_sequence(self) -> bool:
        return self is not Variant.G

    @property
    def uses_general(self) -> bool:
        return self is not Variant.S


class Pooling(enum.Enum):
    """How the LSTM hidden states are reduced before the dense layers."""

    CONCAT = "concat"
    LAST = "last"
    MEAN = "mean"


def _check_shares(name: str, shares: cabc.Sequence[float], n: int) -> None:
    if len(shares) != n:
        raise ConfigError(f"{name} needs {n} values, got {len(shares)}")
    if any(s < 0 for s in shares) or not math.isclose(
        math.fsum(shares), 1.0, abs_tol=1e-9
    ):
        raise ConfigError(f"{name} must be non-negative and sum to 1")


@dataclasses.dataclass(frozen=True)
class IngestConfig:
    min_days: int = 7
    """Minimum number of active days of a frequent user."""
    delimiter: str = ","

    def __post_init__(self) -> None:
        if self.min_days < 1:
            raise ConfigError("ingest.min_days must be at least 1")
        if len(self.delimiter) != 1:
            raise ConfigError("ingest.delimiter must be a single character")


@dataclasses.dataclass(frozen=True)
class ContextConfig:
    theta_r: float = 1.5
    """Rush-hour ratio separating residential from work stations."""
    theta_e: float = 0.35
    """Weekend traffic share that marks an entertainment station."""
    radius_km: float = 2.0
    """Search radius for communities around a home station."""
    poi_radius_km: float = 1.0
    t_low: float | None = None
    """Low/middle price boundary; calibrated from the data if unset."""
    t_high: float | None = 70000.0
    """Middle/high price boundary."""
    threshold_mode: t.Literal["fixed", "quantile"] = "fixed"
    class_shares: tuple[float, float, float] = (0.444, 0.362, 0.194)
    """Target shares of the low, middle and high classes."""
    work_min_visits: int = 2

    def __post_init__(self) -> None:
        if self.theta_r < 1:
            raise ConfigError("context.theta_r must be at least 1")
        if not 0 < self.theta_e <= 1:
            raise ConfigError("context.theta_e must be in (0, 1]")
        if self.radius_km <= 0 or self.poi_radius_km <= 0:
            raise ConfigError("context radii must be positive")
        if self.threshold_mode not in ("fixed", "quantile"):
            raise ConfigError(
                f"Unknown threshold_mode: {self.threshold_mode!r}"
            )
        if self.threshold_mode == "fixed" and self.t_high is None:
            raise ConfigError("threshold_mode 'fixed' needs t_high")
        if (
            self.t_low is not None
            and self.t_high is not None
            and not self.t_low < self.t_high
        ):
            raise ConfigError("context.t_low must be below context.t_high")
        _check_shares("context.class_shares", self.class_shares, 3)
        if self.work_min_visits < 1:
            raise ConfigError("context.work_min_visits must be at least 1")


@dataclasses.dataclass(frozen=True)
class FeatureConfig:
    k: int = 2
    rms_rg: bool = False
    """Use the root-mean-square radius of gyration instead of the mean."""
    topk_centroid: bool = False
    """Measure the k-radius against the centroid of the top-k stations."""
    include_td: bool = False
    include_returner_flag: bool = False
    bin_minutes: int = 15
    start_date: datetime.date = datetime.date(2015, 4, 1)
    days: int = 8
    gap_first_half: t.Literal["alight", "previous_board"] = "alight"
    """Which station owns the first half of a gap between two trips."""

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("features.k must be at least 1")
        if self.bin_minutes < 1 or 60 % self.bin_minutes:
            raise ConfigError("features.bin_minutes must divide 60")
        if self.days < 1:
            raise ConfigError("features.days must be at least 1")
        if self.gap_first_half not in ("alight", "previous_board"):
            raise ConfigError(
                f"Unknown gap_first_half: {self.gap_first_half!r}"
            )


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Architecture and training settings of the fused classifier."""

    embed_time: int = 11
    embed_fm: int = 2
    embed_fu: int = 2
    lstm_hidden: int = 64
    seq_dense: int = 64
    general_dense: int = 24
    fusion: int = 24
    """Width of both branch outputs."""
    n_classes: int = 3
    seq_pooling: Pooling = Pooling.CONCAT
    variant: Variant = Variant.SG
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 30
    clip_norm: float | None = 5.0
    train_ratio: float = 0.8

    def __post_init__(self) -> None:
        widths = (
            self.embed_time,
            self.embed_fm,
            self.embed_fu,
            self.lstm_hidden,
            self.seq_dense,
            self.general_dense,
            self.fusion,
            self.batch_size,
        )
        if min(widths) < 1:
            raise ConfigError("All model widths must be at least 1")
        if self.n_classes < 2:
            raise ConfigError("model.n_classes must be at least 2")
        if self.epochs < 0 or self.lr < 0:
            raise ConfigError("model.epochs and model.lr must not be negative")
        if not 0 < self.train_ratio < 1:
            raise ConfigError("model.train_ratio must be in (0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("model.clip_norm must be positive")


@dataclasses.dataclass(frozen=True)
class CityConfig:
    n_stations: int = 36
    spacing_km: float = 3.5
    jitter_km: float = 0.25
    center: tuple[float, float] = (31.23, 121.47)
    function_mix: tuple[float, float, float] = (0.5, 0.25, 0.25)
    """Shares of residential, entertainment and work stations."""
    communities_per_station: int = 3
    community_radius_km: float = 0.6
    price_tiers: tuple[
        tuple[float, float], tuple[float, float], tuple[float, float]
    ] = ((12000.0, 38000.0), (42000.0, 66000.0), (74000.0, 99000.0))
    """Uniform price bands of low, middle and high tier communities."""
    pois_per_station: int = 8

    def __post_init__(self) -> None:
        if self.n_stations < 6:
            raise ConfigError("city.n_stations must be at least 6")
        _check_shares("city.function_mix", self.function_mix, 3)
        if self.spacing_km <= 0 or self.jitter_km < 0:
            raise ConfigError("city.spacing_km must be positive")
        for low, high in self.price_tiers:
            if not 1000 <= low < high <= 500000:
                raise ConfigError(f"Invalid price tier: {low}..{high}")


@dataclasses.dataclass(frozen=True)
class PopulationConfig:
    """Lifestyle archetypes of the synthetic population.

    Per-class values are given in the order low, middle, high. The
    ``separation`` dial scales all differences between the classes:
    ``0`` makes every class behave like the middle class, ``1`` keeps
    the values as configured.
    """

    n_agents: int = 1000
    days: int = 8
    start_date: datetime.date = datetime.date(2015, 4, 1)
    class_shares: tuple[float, float, float] = (0.444, 0.362, 0.194)
    separation: float = 1.0
    start_mean_h: tuple[float, float, float] = (7.0, 8.0, 9.5)
    start_sd_h: float = 0.5
    work_hours: tuple[float, float, float] = (9.5, 9.0, 8.5)
    weekend_fun_rate: tuple[float, float, float] = (0.2, 0.5, 0.9)
    evening_fun_rate: tuple[float, float, float] = (0.05, 0.15, 0.35)
    part_time_rate: tuple[float, float, float] = (0.25, 0.05, 0.0)
    """Probability of working a short afternoon shift on a weekday."""
    weekend_active_rate: tuple[float, float, float] = (0.9, 0.9, 0.9)
    """Probability of leaving home on a weekend day at all."""
    weekend_work_rate: tuple[float, float, float] = (0.35, 0.1, 0.0)
    commute_bias: tuple[float, float, float] = (1.0, 0.0, -1.0)
    """Preference for far (positive) or near (negative) work stations."""
    extra_trip_rate: float = 0.1
    jitter_sd_min: float = 15.0

    def __post_init__(self) -> None:
        if self.n_agents < 0 or self.days < 1:
            raise ConfigError("population needs n_agents >= 0, days >= 1")
        _check_shares("population.class_shares", self.class_shares, 3)
        if self.separation < 0:
            raise ConfigError("population.separation must not be negative")
        for name in (
            "weekend_fun_rate",
            "evening_fun_rate",
            "part_time_rate",
            "weekend_active_rate",
            "weekend_work_rate",
        ):
            if any(not 0 <= v <= 1 for v in getattr(self, name)):
                raise ConfigError(f"population.{name} must be in [0, 1]")
        if not 0 <= self.extra_trip_rate <= 1:
            raise ConfigError("population.extra_trip_rate must be in [0, 1]")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """The complete configuration of a pipeline run."""

    seed: int = 0
    threads: int = 1
    ingest: IngestConfig = dataclasses.field(default_factory=IngestConfig)
    context: ContextConfig = dataclasses.field(default_factory=ContextConfig)
    features: FeatureConfig = dataclasses.field(default_factory=FeatureConfig)
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    city: CityConfig = dataclasses.field(default_factory=CityConfig)
    population: PopulationConfig = dataclasses.field(
        default_factory=PopulationConfig
    )

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    def seed_for(self, stage: str) -> int:
        """Return the named sub-seed of a stage."""
        return derive_seed(self.seed, stage)

    @property
    def windows_agree(self) -> bool:
        """Whether the simulated days are the days that get sequenced."""
        return (self.population.start_date, self.population.days) == (
            self.features.start_date,
            self.features.days,
        )

    def with_days(self, days: int) -> RunConfig:
        """Set the simulated and the sequenced study window to ``days``.

        The sequence window starts at the population's start date.
        """
        return dataclasses.replace(
            self,
            population=dataclasses.replace(self.population, days=days),
            features=dataclasses.replace(
                self.features,
                days=days,
                start_date=self.population.start_date,
            ),
        )


_SECTIONS: dict[str, type[t.Any]] = {
    "ingest": IngestConfig,
    "context": ContextConfig,
    "features": FeatureConfig,
    "model": ModelConfig,
    "city": CityConfig,
    "population": PopulationConfig,
}


def _coerce(hint: t.Any, value: t.Any, key: str) -> t.Any:
    origin = t.get_origin(hint)
    if origin in (t.Union, types.UnionType):
        args = t.get_args(hint)
        if value is None and type(None) in args:
            return None
        (hint,) = (a for a in args if a is not type(None))
        return _coerce(hint, value, key)
    if origin is t.Literal:
        if value not in t.get_args(hint):
            raise ConfigError(f"Invalid value for {key}: {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, cabc.Sequence) or isinstance(value, str):
            raise ConfigError(f"Expected a list for {key}, got {value!r}")
        args = t.get_args(hint)
        if len(args) != len(value):
            raise ConfigError(
                f"Expected {len(args)} values for {key}, got {len(value)}"
            )
        return tuple(
            _coerce(a, v, f"{key}[{i}]")
            for i, (a, v) in enumerate(zip(args, value, strict=True))
        )
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        try:
            return hint(value)
        except ValueError:
            raise ConfigError(f"Invalid value for {key}: {value!r}") from None
    if hint is datetime.date:
        if isinstance(value, datetime.date):
            return value
        try:
            return datetime.date.fromisoformat(str(value))
        except ValueError:
            raise ConfigError(f"Invalid date for {key}: {value!r}") from None
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"Expected true/false for {key}: {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"Expected an integer for {key}: {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(f"Expected a number for {key}: {value!r}")
        return float(value)
    if hint is str:
        return str(value)
    raise ConfigError(f"Cannot set {key} from {value!r}")


def _build(cls: type[t.Any], values: t.Any, prefix: str) -> t.Any:
    if values is None:
        return cls()
    if not isinstance(values, cabc.Mapping):
        raise ConfigError(f"Section {prefix!r} must be a mapping")
    hints = t.get_type_hints(cls)
    unknown = set(values) - set(hints)
    if unknown:
        names = ", ".join(sorted(map(str, unknown)))
        raise ConfigError(f"Unknown keys in {prefix!r}: {names}")
    kwargs = {
        k: _coerce(hints[k], v, f"{prefix}.{k}") for k, v in values.items()
    }
    return cls(**kwargs)


def from_mapping(data: cabc.Mapping[str, t.Any] | None) -> RunConfig:
    """Build a :class:`RunConfig` from a nested mapping."""
    data = dict(data or {})
    unknown = set(data) - set(_SECTIONS) - {"seed", "threads"}
    if unknown:
        names = ", ".join(sorted(map(str, unknown)))
        raise ConfigError(f"Unknown configuration keys: {names}")
    kwargs: dict[str, t.Any] = {
        name: _build(cls, data.get(name), name)
        for name, cls in _SECTIONS.items()
    }
    for key in ("seed", "threads"):
        if key in data:
            kwargs[key] = _coerce(int, data[key], key)
    return RunConfig(**kwargs)


def load_config(file: FileOrPath | None = None) -> RunConfig:
    """Load a run configuration from a YAML file.

    Parameters
    ----------
    file
        An open text file, or a path to a UTF-8 encoded file. If None,
        the built-in defaults are returned.

    Raises
    ------
    ConfigError
        If the file is not a mapping, or contains unknown keys or
        invalid values.
    """
    if file is None:
        return RunConfig()
    if isinstance(file, str | os.PathLike):
        with open(file, encoding="utf-8") as opened:
            data = yaml.safe_load(opened)
    else:
        data = yaml.safe_load(file)
    if data is not None and not isinstance(data, cabc.Mapping):
        raise ConfigError("The configuration must be a YAML mapping")
    return from_mapping(data)


def apply_overrides(
    config: RunConfig, overrides: cabc.Iterable[str]
) -> RunConfig:
    """Apply ``key=value`` overrides to a configuration.

    Keys are either dotted (``model.lstm_hidden``) or bare, in which
    case they must name exactly one key across all sections. Values are
    parsed with YAML scalar rules, so ``true``, ``0.5`` and ``[1, 2]``
    have their natural types.
    """
    data = to_dict(config)
    for override in overrides:
        key, sep, raw = override.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(
                f"Malformed override, need key=value: {override}"
            )
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as err:
            raise ConfigError(f"Cannot parse value of {key}: {err}") from None

        section, dot, name = key.rpartition(".")
        if not dot:
            if key in data and not isinstance(data[key], dict):
                data[key] = value
                continue
            owners = [s for s in _SECTIONS if key in data[s]]
            if len(owners) != 1:
                raise ConfigError(
                    f"Ambiguous or unknown override key: {key}"
                    + (f" (found in {', '.join(owners)})" if owners else "")
                )
            (section,) = owners
        if section not in _SECTIONS or name not in data[section]:
            raise ConfigError(f"Unknown override key: {key}")
        data[section][name] = value
        LOGGER.debug("Config override %s.%s = %r", section, name, value)
    return from_mapping(data)


def _plain(value: t.Any) -> t.Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple | list):
        return [_plain(i) for i in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(config: t.Any) -> dict[str, t.Any]:
    """Convert a configuration or one of its sections into builtins."""
    return _plain(dataclasses.asdict(config))


def config_hash(config: RunConfig) -> str:
    """Return a stable SHA-256 hex digest of the configuration."""
    canonical = json.dumps(
        to_dict(config), sort_keys=True, separators=(",", ":"), default=str
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(config: RunConfig) -> str:
    """Dump a configuration as YAML that :func:`load_config` accepts."""
    return yaml.safe_dump(to_dict(config), sort_keys=False)
