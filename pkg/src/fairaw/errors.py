"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line driver:
1 for validation/assumption failures, 2 for numerical failures, 3 for I/O.
"""


class FairAWError(Exception):
    exit_code = 1


class ValidationError(FairAWError):
    """An input violates a structural requirement."""


class NotRowDominant(ValidationError):
    pass


class BadSignPattern(ValidationError):
    pass


class SingularOrNegativeInverse(ValidationError):
    pass


class ConditionViolated(ValidationError):
    """The disturbance admits no closed-loop equilibrium."""


class NumericalFailure(FairAWError):
    exit_code = 2


class ResidualTooLarge(NumericalFailure):
    pass


class StepUnderflow(NumericalFailure):
    pass


class NonFiniteState(NumericalFailure):
    pass


class RejectionBudgetExhausted(FairAWError):
    """No admissible disturbance was found for a drawn coupling matrix."""

    exit_code = 2


class ParseError(ValidationError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class IoError(FairAWError, OSError):
    exit_code = 3
