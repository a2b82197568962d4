"""Exception taxonomy. The CLI maps these onto process exit codes."""


class HyperwassError(Exception):
    """Base class for every failure this package raises on purpose."""


class ConfigError(HyperwassError):
    """Bad configuration: unknown keys, missing values, malformed files."""


class NumericError(HyperwassError):
    """A numeric routine failed or produced an inconsistent result."""


class CeilingError(HyperwassError):
    """A resource ceiling was exceeded (support size, cell materialization)."""


class MassMismatchError(NumericError):
    """Total masses of the two measures differ beyond tolerance."""


class OutOfDomainError(HyperwassError, ValueError):
    """A point lies outside the half-open cube it was declared to inhabit."""


class DegenerateGridError(HyperwassError, ValueError):
    """Cube too small to carry a dyadic grid with unit-or-larger cells."""


class IngestError(ConfigError):
    """A point file failed validation; message carries the line number."""
