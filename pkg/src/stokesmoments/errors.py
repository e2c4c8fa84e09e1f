"""Exception hierarchy shared by all stages.

Every error carries the stage name that raised it so the CLI can map it to
an exit code (validation 2, solver 3, convergence 4).
"""


class StokesMomentsError(Exception):
    exit_code = 1
    stage = "unknown"


class InvalidInputError(StokesMomentsError, ValueError):
    exit_code = 2
    stage = "input"


class ParseError(InvalidInputError):
    stage = "parse"


class ValidationError(InvalidInputError):
    stage = "validation"


class ResolutionError(InvalidInputError):
    stage = "geometry"


class GeometryError(InvalidInputError):
    stage = "geometry"


class SingularDiagonalError(InvalidInputError):
    """A log-singular kernel entry was requested at coincident points."""

    stage = "kernel"


class AccuracyError(InvalidInputError):
    """Target too close to a source mesh for naive quadrature."""

    stage = "potential"


class SolverError(StokesMomentsError, ArithmeticError):
    exit_code = 3
    stage = "solver"

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DegenerateScenarioError(SolverError):
    stage = "forward"


class IllPosedError(SolverError):
    stage = "moments"


class IllConditionedError(SolverError):
    stage = "prony"


class ConvergenceError(StokesMomentsError, RuntimeError):
    exit_code = 4
    stage = "balayage"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
