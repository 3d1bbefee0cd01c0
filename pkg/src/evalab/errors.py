"""Exception hierarchy.

Everything derives from :class:`EvalabError`. Errors caused by bad input
subclass :class:`InvalidInput` (CLI exit code 2); errors raised because an
exhaustive computation would exceed a size cap subclass :class:`Infeasible`
(CLI exit code 3).
"""


class EvalabError(Exception):
    """Base class for all library errors."""


class InvalidInput(EvalabError, ValueError):
    pass


class Infeasible(EvalabError):
    pass


class NegativeProbability(InvalidInput):
    pass


class NotNormalized(InvalidInput):
    pass


class DuplicateLabel(InvalidInput):
    pass


class DomainMismatch(InvalidInput):
    pass


class UnknownLabel(InvalidInput):
    pass


class AlphaOutOfRange(InvalidInput):
    pass


class GammaOutOfRange(InvalidInput):
    pass


class InvalidParameters(InvalidInput):
    pass


class NotBinary(InvalidInput):
    pass


class CandidateNotInPair(InvalidInput):
    pass


class EmptyGrid(InvalidInput):
    pass


class SupportTooLarge(Infeasible):
    pass


class DomainTooLarge(Infeasible):
    pass


class TooManyFunctions(Infeasible):
    pass
