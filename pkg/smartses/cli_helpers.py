# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Helpers for working with run configurations in CLI scripts."""

from __future__ import annotations

__all__ = [
    "ConfigCLI",
    "OverrideCLI",
    "default_config_path",
    "loadconfig",
]

import logging
import os
import pathlib
import typing as t

import smartses
from smartses import config as _config

LOGGER = logging.getLogger(__name__)

try:
    import click

    class ConfigCLI(click.ParamType):
        """Declare an option that loads a run configuration.

        Use instances of this class for the *type* argument to
        :func:`click.option` etc.

        See Also
        --------
        smartses.cli_helpers.loadconfig :
            A standalone function performing the same task.

        Examples
        --------
        .. code-block:: python

           @click.command()
           @click.option("-c", "--config", type=smartses.ConfigCLI())
           def main(config: smartses.RunConfig) -> None:
               ...
        """

        name = "CONFIG_FILE"

        def convert(self, value: t.Any, param, ctx) -> _config.RunConfig:
            """Convert the value to the target type."""
            if isinstance(value, _config.RunConfig):
                return value

            try:
                return loadconfig(value)
            except OSError as err:
                self.fail(f"Cannot read {value}: {err.strerror}", param, ctx)
            except ValueError as err:
                self.fail(f"{value}: {err}", param, ctx)

    class OverrideCLI(click.ParamType):
        """Declare an option that takes one ``key=value`` override."""

        name = "KEY=VALUE"

        def convert(self, value: t.Any, param, ctx) -> str:
            """Check the shape of the override."""
            key, sep, _ = str(value).partition("=")
            if not sep or not key.strip():
                self.fail(f"Expected key=value, got {value!r}", param, ctx)
            return str(value)

except ImportError:
    if not t.TYPE_CHECKING:

        def ConfigCLI(*__, **_):
            """Raise a dependency error."""
            raise RuntimeError("click is not installed")

        def OverrideCLI(*__, **_):
            """Raise a dependency error."""
            raise RuntimeError("click is not installed")


def default_config_path() -> pathlib.Path | None:
    """Find the user's default run configuration.

    This is the ``config.yml`` in the user's configuration directory,
    if it exists. Run the following command to print its location:

    .. code:: bash

       smartses --help
    """
    path = smartses.dirs.user_config_path / "config.yml"
    if path.is_file():
        return path
    return None


def loadconfig(
    value: str | os.PathLike[str] | None,
) -> _config.RunConfig:
    """Load a run configuration from a YAML file.

    Parameters
    ----------
    value
        Path to the file. If None, the user's default configuration is
        loaded if there is one, otherwise the built-in defaults are
        used.

    Returns
    -------
    RunConfig
        The loaded configuration.
    """
    if value is None:
        value = default_config_path()
        if value is None:
            return _config.RunConfig()
    LOGGER.info("Loading configuration from %s", value)
    return _config.load_config(value)
