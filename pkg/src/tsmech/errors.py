"""Exception types raised across the package."""


class TSMError(Exception):
    """Base class for all package errors."""


class RetryExhausted(TSMError):
    """Rejection sampling could not find a physically admissible realization."""


class UnsupportedDistribution(TSMError):
    pass


class ShapeMismatch(TSMError):
    """Moment set and material model disagree on the fluctuation sources."""


class NonFiniteState(TSMError):
    """Time integration produced NaN or Inf, usually because ``dt`` is too large."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class DegeneratePhase(TSMError):
    """A volume fraction reached 0 or 1 within rounding."""

    def __init__(self, step=None, message=None):
        self.step = step
        if message is None:
            message = "volume fraction degenerate"
            if step is not None:
                message += f" at step {step}"
        super().__init__(message)


class OutOfDomain(TSMError):
    pass


class InsufficientSamples(TSMError):
    pass


class ParseError(TSMError):
    """Configuration text could not be parsed."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(TSMError):
    """Configuration is well-formed but violates one or more constraints."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
