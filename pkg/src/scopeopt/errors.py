"""Exception hierarchy shared across the package."""


class ScopeError(Exception):
    """Base class for all package errors."""


class DimensionError(ScopeError, ValueError):
    pass


class NonFiniteError(ScopeError, ArithmeticError):
    pass


class DataFormatError(ScopeError, ValueError):
    """Malformed input data; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ScopeError, ValueError):
    pass


class AssumptionError(ScopeError, ValueError):
    """The problem violates a smoothness / strong convexity requirement."""


class DivergenceError(ScopeError):
    """An iterate became non-finite or left the 1e12 ball.

    ``round`` and ``step`` locate the event; ``metrics`` carries the partial
    run record when raised out of a driver.
    """

    def __init__(self, round=None, step=None, worker_id=None, metrics=None):
        self.round = round
        self.step = step
        self.worker_id = worker_id
        self.metrics = metrics
        where = []
        if worker_id is not None:
            where.append(f"worker {worker_id}")
        if round is not None:
            where.append(f"round {round}")
        if step is not None:
            where.append(f"step {step}")
        super().__init__("iterate diverged" + (" at " + ", ".join(where) if where else ""))
