"""Exception hierarchy shared by the learner, the harness and the Dagster assets."""

from __future__ import annotations

from typing import Any


class MixtureError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 4


class StructuralError(MixtureError, ValueError):
    """Shapes or file layouts that do not fit together."""

    exit_code = 2


class ParameterError(MixtureError, ValueError):
    """A parameter outside the range an operation supports."""

    exit_code = 2


class DataError(MixtureError, ValueError):
    """Non-finite or unparsable values in the input data."""

    exit_code = 2


class ResourceError(MixtureError, RuntimeError):
    """Ran out of samples; ``partial`` carries whatever was computed so far."""

    exit_code = 3

    def __init__(self, msg: str, partial: Any = None) -> None:
        super().__init__(msg)
        self.partial = partial


class InvariantError(MixtureError, RuntimeError):
    """An internal post-condition failed."""

    exit_code = 4
