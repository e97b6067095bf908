"""
Exception hierarchy shared by every layer of the analyzer
"""
from typing import Optional, Tuple


class StabilityError(Exception):
    """Base class for all analyzer errors.

    ``exit_code`` is the process status the command line reports when the
    error reaches it: 2 for usage and input problems, 3 for internal failures.
    """

    exit_code = 3


class FormulaSyntaxError(StabilityError):
    """Malformed DSL input"""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        location = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{location}")


class UnknownSymbolError(StabilityError):
    """Function symbol outside the library or wrong arity"""

    exit_code = 2


class UnboundedQuantifierError(StabilityError):
    """A sentence was required but the formula has unbounded or free variables"""

    exit_code = 2


class ParameterError(StabilityError, ValueError):
    """Invalid numeric parameter or inconsistent configuration"""

    exit_code = 2


class DomainViolation(StabilityError):
    """Division by an interval containing the guard band, or a negative radicand"""


class UnregisteredSystemError(StabilityError):
    """A flow term references an ODE system that was never registered"""


class BoundsEscapeError(StabilityError):
    """A validated enclosure left the state bounds of its system"""

    def __init__(self, message: str, escape_time: Tuple[float, float]):
        self.escape_time = escape_time
        super().__init__(f"{message} (escape time in [{escape_time[0]:.6g}, {escape_time[1]:.6g}])")


class NonConvergenceError(StabilityError):
    """The Picard a-priori box did not contract at the minimum step"""


class ResolutionFloorError(StabilityError):
    """The solver reached its resolution floor without a decision"""


class PathExplosionError(StabilityError):
    """Too many mode paths for explicit enumeration"""

    exit_code = 2


class UnknownModeError(StabilityError):
    """Mode name not declared by the automaton"""

    exit_code = 2
