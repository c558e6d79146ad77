"""Exception hierarchy shared by all modules."""


class HirulError(Exception):
    """Base class for all package errors."""


class ParamError(HirulError, ValueError):
    """Invalid parameter set or argument value."""


class AlreadyDead(HirulError):
    """Cell is already at or below the end-of-life capacity threshold."""


class NonTerminating(HirulError):
    """Cycle simulation exceeded its throughput guard without reaching end of life."""

    def __init__(self, message, scenario_id=None):
        super().__init__(message)
        self.scenario_id = scenario_id


class DegenerateInput(HirulError, ValueError):
    """Statistic undefined for the given sample (zero variance, too few points, |r| = 1)."""


class RankDeficient(HirulError):
    """Least-squares design matrix is singular."""


class OutOfDomain(HirulError, ValueError):
    """Evaluation point lies outside the fitted domain."""


class Infeasible(HirulError):
    """No operating point satisfies the RUL target."""


class ParseError(HirulError):
    """Malformed case file text."""

    def __init__(self, message, line=None, column=None, expected=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column})"
        if expected:
            message = f"{message}; expected {expected}"
        super().__init__(message + loc)
        self.line = line
        self.column = column
        self.expected = expected


class SchemaError(HirulError):
    """Case file is missing a matrix or has the wrong number of columns."""


class ValidationError(HirulError):
    """Case data violates a structural invariant."""


class UnknownBus(HirulError, KeyError):
    """Referenced bus id does not exist in the network."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown bus"


class Diverged(HirulError):
    """Newton power flow hit its iteration cap."""

    def __init__(self, message, mismatch=None, iterations=None):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


class SingularJacobian(HirulError):
    """Power-flow Jacobian could not be factorized."""


class MissingConstraints(HirulError):
    """Health-informed OPF requested for a battery without box data."""


class SingularKkt(HirulError):
    """Interior-point Newton system could not be factorized."""


class OpfInfeasible(HirulError):
    """Interior-point iterates diverged; no feasible point found."""
