"""Exception hierarchy shared across the package."""

from __future__ import annotations


class StellaError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(StellaError):
    """Invalid run configuration or missing environment setup."""


# -- domain ---------------------------------------------------------------

class InvalidSlate(StellaError, ValueError):
    pass


class InvalidRanking(StellaError, ValueError):
    pass


class SlateTooLarge(StellaError, ValueError):
    pass


class MissingTruth(StellaError, ValueError):
    pass


# -- prompting ------------------------------------------------------------

class SchemeOverflow(StellaError, ValueError):
    pass


class InvalidAnswer(StellaError):
    """A backend answer failed the legality check.

    ``raw`` keeps the offending text (or texts, for repeated attempts) so
    callers can log it before excluding the answer.
    """

    def __init__(self, message: str, raw: str | list[str] = ""):
        super().__init__(message)
        self.raw = raw


class MalformedOutput(InvalidAnswer):
    pass


class UnknownLabel(InvalidAnswer):
    pass


class DuplicateLabel(InvalidAnswer):
    pass


class WrongLength(InvalidAnswer):
    pass


# -- rankers --------------------------------------------------------------

class DimensionMismatch(StellaError, ValueError):
    pass


class TransportError(StellaError):
    pass


class RateLimited(TransportError):
    pass


# -- probing / calibration ------------------------------------------------

class InsufficientHistory(StellaError, ValueError):
    pass


class PoolTooSmall(StellaError, ValueError):
    pass


class EmptyObservations(StellaError, ValueError):
    pass


class ProbingAborted(StellaError):
    """More than half of the probe answers were invalid."""


class DegenerateLikelihood(StellaError, ArithmeticError):
    pass


class BackendExhausted(StellaError):
    pass


class LengthMismatch(StellaError, ValueError):
    pass


# -- harness / app --------------------------------------------------------

class EmptyInput(StellaError, ValueError):
    pass


class SchemaError(StellaError, ValueError):
    pass


class TooManyMalformed(SchemaError):
    pass
