"""Exception types raised across the package."""

from __future__ import annotations


class BudgetGraphError(Exception):
    """Base class for all errors raised by this package."""


# graph
class GraphError(BudgetGraphError):
    pass


class EmptyQuestion(GraphError):
    pass


class TooManySubtasks(GraphError):
    pass


class EmptyPlan(GraphError):
    pass


class NodeLimitExceeded(GraphError):
    pass


class DepthLimitExceeded(GraphError):
    pass


class UnknownNode(GraphError, KeyError):
    pass


class InvalidTransition(GraphError):
    pass


# trace pool
class PoolError(BudgetGraphError):
    """Malformed pool input. ``line`` is 1-based, or None when not file-bound."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(PoolError):
    pass


class MissingAction(PoolError):
    pass


class NonPositiveCost(PoolError):
    pass


class EmptyPool(BudgetGraphError):
    pass


class EmptyFeasible(BudgetGraphError):
    pass


class InvalidCount(BudgetGraphError, ValueError):
    pass


# router
class DimensionMismatch(BudgetGraphError, ValueError):
    pass


class NonFiniteInput(BudgetGraphError, ValueError):
    pass


class EmptyTrainingSet(BudgetGraphError):
    pass


class VersionMismatch(BudgetGraphError):
    pass


class CorruptFile(BudgetGraphError):
    pass


# scheduler
class BudgetTooSmall(BudgetGraphError, ValueError):
    pass


# executor / backends
class PlanParseError(BudgetGraphError):
    pass


class BackendError(BudgetGraphError):
    """A model call failed. ``context`` carries node / phase information."""

    def __init__(self, message: str, context: dict | None = None):
        self.context = dict(context or {})
        super().__init__(message)


class Timeout(BackendError):
    pass


class HttpStatus(BackendError):
    def __init__(self, code: int, message: str = "", context: dict | None = None):
        self.code = code
        super().__init__(f"HTTP {code}{': ' + message if message else ''}", context)


class MalformedResponse(BackendError):
    pass


class ScenarioParseError(BudgetGraphError):
    pass


# evaluation
class IncompleteGrid(BudgetGraphError):
    pass


class LengthMismatch(BudgetGraphError, ValueError):
    pass


class DegenerateInput(UserWarning):
    """Warning category: a rank correlation was requested on a constant input."""


class EmptyTraces(BudgetGraphError):
    pass


class ConfigError(BudgetGraphError):
    pass
