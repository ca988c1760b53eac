"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data or configuration violates a documented contract."""


class ParseError(ValidationError):
    """A delimited-text input could not be parsed."""


class NumericalError(ArithmeticError):
    """A sampler produced a value that is impossible analytically."""


class ChainAbort(RuntimeError):
    """An MCMC chain had to stop; carries the iteration and horizon."""

    def __init__(self, message, iteration=None, horizon=None):
        self.raw_message = message
        self.iteration = iteration
        self.horizon = horizon
        where = []
        if horizon is not None:
            where.append(f"horizon {horizon}")
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)

    def __reduce__(self):
        return (type(self), (self.raw_message, self.iteration, self.horizon))
