"""Exception taxonomy shared by the library and the command line tool.

The split mirrors how callers need to react: malformed bytes on disk
(FormatError), structurally valid input that violates a shape or domain
contract (InputError), an out-of-range knob (ParameterError), metadata that
a particular operation needs but the file did not carry (MetadataError),
and a sampling procedure that could not satisfy its own post-conditions
(GenerationError).
"""

from __future__ import annotations

__all__ = [
    "SegrosError",
    "InputError",
    "ParameterError",
    "FormatError",
    "MetadataError",
    "GenerationError",
]


class SegrosError(Exception):
    """Base class so callers can catch everything from this package at once."""


class InputError(SegrosError, ValueError):
    """Array or sequence input violates a shape, dtype, or consistency contract."""


class ParameterError(SegrosError, ValueError):
    """A configuration value is outside its documented domain."""


class FormatError(SegrosError, ValueError):
    """Bytes on disk do not parse as the advertised file format."""


class MetadataError(SegrosError, ValueError):
    """An operation requires optional metadata the input did not provide."""


class GenerationError(SegrosError, RuntimeError):
    """A randomized construction failed its post-conditions within budget."""
