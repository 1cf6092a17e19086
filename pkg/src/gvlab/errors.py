"""Exception hierarchy shared by every gvlab module."""


class GvlabError(Exception):
    """Base class for all gvlab errors."""


class DomainError(GvlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(GvlabError, ValueError):
    """An object does not satisfy the assumptions an operation relies on."""


class ValidationError(GvlabError, ValueError):
    """A derived quantity failed a structural check (e.g. growth rate)."""


class ResourceError(GvlabError):
    """A requested problem size exceeds the configured caps."""


class NumericError(GvlabError, ArithmeticError):
    """A numerical procedure failed to converge.

    ``diagnostics`` carries whatever the failing routine could report
    (estimated error, iteration counts, residuals).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
