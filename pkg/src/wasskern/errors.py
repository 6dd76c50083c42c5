"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class WasskernError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(WasskernError):
    """A caller violated an operation's contract (bad arguments, shapes, grids)."""


class DataError(WasskernError):
    """Input data is malformed: parse failures, zero-mass images, bad caches."""


class NumericalError(WasskernError):
    """A numerical procedure failed (singular system, degenerate spectrum)."""
