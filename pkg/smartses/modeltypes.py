# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Enumeration types shared by the pipeline stages."""

from __future__ import annotations

__all__ = [
    "LEISURE_POIS",
    "PoiCategory",
    "SESLevel",
    "StationFunction",
    "StationRole",
]

import enum as _enum
import typing as t

import typing_extensions as te


class _StringyEnumMixin:
    """Mixin for enums that makes members compare equal to their labels.

    A member compares equal to its key name (``"HIGH"``) and to its
    value as it appears in files (``"high"``). Members also carry a
    dense integer :attr:`code`, which is their definition order and is
    what the model consumes.

    :meta public:
    """

    name: t.Any
    value: t.Any
    _name_: t.Any

    def __eq__(self, other: object) -> bool:
        if isinstance(other, type(self)):
            return self is other
        if isinstance(other, str):
            return other in (self.name, self.value)
        return NotImplemented

    def __str__(self) -> str:
        return str(self.value)

    def __hash__(self):
        return hash(self._name_)

    @property
    def code(self) -> int:
        """The dense integer code of this member."""
        return list(type(self)).index(self)  # type: ignore[call-overload]

    @classmethod
    def from_code(cls, code: int) -> te.Self:
        """Look up a member by its integer code."""
        members = list(cls)  # type: ignore[call-overload]
        if not 0 <= code < len(members):
            raise ValueError(f"Invalid {cls.__name__} code: {code}")
        return members[code]

    @classmethod
    def parse(cls, label: str) -> te.Self:
        """Look up a member by its file label or key name."""
        for member in cls:  # type: ignore[attr-defined]
            if member == label:
                return member
        try:
            return cls(label)  # type: ignore[call-arg]
        except ValueError:
            pass
        raise ValueError(f"Invalid {cls.__name__} label: {label!r}")


@_enum.unique
class SESLevel(_StringyEnumMixin, _enum.Enum):
    """The three socioeconomic status classes, in ascending order."""

    LOW = "low"
    MIDDLE = "middle"
    HIGH = "high"


@_enum.unique
class StationFunction(_StringyEnumMixin, _enum.Enum):
    """Function of a station for most citizens.

    ``TRANSFER`` never describes a station; it marks time bins spent
    inside the fare gate, between boarding and alighting.
    """

    RESIDENTIAL = "residential"
    ENTERTAINMENT = "entertainment"
    WORK = "working"
    TRANSFER = "transfer"

    @classmethod
    def _missing_(cls, value: object) -> StationFunction | None:
        if value == "work":
            return cls.WORK
        return None


@_enum.unique
class StationRole(_StringyEnumMixin, _enum.Enum):
    """Function of a station for one particular user."""

    HOME = "home"
    WORK = "work"
    OTHERS = "others"
    TRANSFER = "transfer"


@_enum.unique
class PoiCategory(_StringyEnumMixin, _enum.Enum):
    """Categories of points of interest around stations."""

    PUBLIC_FACILITY = "Public Facility"
    DOMESTIC_SERVICES = "Domestic services"
    EDUCATION = "Education"
    BUSINESS_RESIDENCE = "Business Residence"
    HOSPITAL = "Hospital"
    HOTEL = "Hotel"
    CAR_SERVICES = "Car services"
    SPORT_LEISURE = "Sport&Leisure"
    SCENERY = "Scenery"
    RESTAURANT = "Restaurant"
    PUBLIC_TRANSPORTATION = "Public Transportation"
    FINANCIAL_SERVICES = "Financial Services"


LEISURE_POIS = frozenset(
    {
        PoiCategory.SPORT_LEISURE,
        PoiCategory.SCENERY,
        PoiCategory.RESTAURANT,
        PoiCategory.HOTEL,
    }
)
