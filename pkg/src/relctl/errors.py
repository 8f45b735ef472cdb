"""Exception hierarchy. Each family maps to one CLI exit code."""

from __future__ import annotations


class RelctlError(Exception):
    exit_code = 1


class ConfigError(RelctlError):
    """Invalid configuration, flags, or missing config/schema files."""

    exit_code = 2


class DataError(RelctlError):
    """Malformed or insufficient input data."""

    exit_code = 3


class UndefinedMetricError(DataError):
    """A metric is not defined for the given input (e.g. single-class AUC)."""


class InvariantError(RelctlError):
    """An internal consistency check failed."""

    exit_code = 4
