"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A user-supplied parameter, mesh, or config file is invalid."""


class NumericalError(RuntimeError):
    """A linear/eigen solver failed to reach its contracted tolerance."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)
        self.residual = residual


class OptimizerFailure(NumericalError):
    """Line search could not produce a monotone step above the backtracking floor."""
