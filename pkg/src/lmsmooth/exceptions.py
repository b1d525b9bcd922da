"""Exception and warning classes raised across the package."""


class LMSmoothError(Exception):
    """Base class for data errors raised by lmsmooth."""


class EmptySentence(LMSmoothError, ValueError):
    pass


class InvalidBlockCount(LMSmoothError, ValueError):
    pass


class UnderflowError(LMSmoothError, ValueError):
    """A block holds more of some event than the table it is removed from."""


class EmptyCorpus(LMSmoothError, ValueError):
    pass


class EmptyTest(LMSmoothError, ValueError):
    pass


class OovError(LMSmoothError, KeyError):
    """A token is outside the vocabulary of the fitted model."""

    def __str__(self):
        return Exception.__str__(self)


class DomainError(LMSmoothError, ValueError):
    pass


class UndefinedClass(LMSmoothError, ValueError):
    """Good-Turing estimate requested for a count class with no successor."""


class DegenerateVocabulary(LMSmoothError, ValueError):
    pass


class NonConvergence(UserWarning):
    """Iterative fit hit ``max_iter``; the returned model is flagged."""
