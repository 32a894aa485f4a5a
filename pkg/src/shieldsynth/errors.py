"""Exception hierarchy shared by every shieldsynth module."""


class ShieldSynthError(Exception):
    """Base class for all library errors."""


class ContractError(ShieldSynthError, ValueError):
    """A precondition on an argument (shape, range, sign) does not hold."""


class NumericalError(ShieldSynthError, ArithmeticError):
    """A computation produced non-finite values or hit a singular pivot."""


class ConvergenceError(ShieldSynthError):
    """An iterative method exhausted its iteration budget."""


class LpError(ShieldSynthError):
    """The LP solver could not produce a usable answer."""


class UnboundedSafeSet(ShieldSynthError):
    """A safe polytope that was expected to be bounded is not."""


class SynthesisFailure(ShieldSynthError):
    """CEGIS could not certify the initial-state box."""


class ParseError(ShieldSynthError):
    """Malformed shield program text."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
