"""Exception hierarchy.

Validation problems (bad files, bad configs, violated preconditions on
inputs) derive from :class:`ValidationError`; failures that happen while
computing (a fit that cannot proceed, a degenerate estimate) derive from
:class:`ComputationError`. The CLI maps the two families to exit codes 2
and 1.
"""


class RctPolicyError(Exception):
    """Base class for all package errors."""


class ValidationError(RctPolicyError, ValueError):
    """Input data or configuration violates a documented precondition."""


class ParseError(ValidationError):
    """A cohort file could not be parsed.

    ``row`` is 1-based and counts the header as row 1; ``column`` is the
    header name when known.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ComputationError(RctPolicyError, RuntimeError):
    """A numerical routine could not produce a result."""


class FitError(ComputationError):
    pass


class EstimationError(ComputationError):
    pass


class FoldError(ComputationError):
    """A cross-validation fold cannot support the requested meta-learner."""


class UnsupportedOperation(RctPolicyError, TypeError):
    pass
