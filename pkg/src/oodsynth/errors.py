"""Exception hierarchy.

The three mid-level groups map onto CLI exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class OodSynthError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(OodSynthError):
    """Invalid configuration, argument, or class id."""


class DataError(OodSynthError):
    """Missing or insufficient data for the requested operation."""


class NumericalError(OodSynthError):
    """Degenerate numerical situation (zero vectors, singular densities)."""


class BadArgError(ConfigError):
    pass


class BadConfigError(ConfigError):
    pass


class BadClassError(ConfigError):
    pass


class NotUnitError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class EmptyBufferError(DataError):
    pass


class TooFewSamplesError(DataError):
    pass


class PrototypeUndefinedError(DataError):
    pass


class CorruptStoreError(DataError):
    pass


class ZeroVectorError(NumericalError):
    pass


class AntipodalPrototypesError(NumericalError):
    pass


class DegenerateDensityError(NumericalError):
    pass
