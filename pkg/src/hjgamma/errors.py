"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid construction parameters or run configuration."""


class GridMismatchError(ConfigurationError):
    """Functions live on different grids and no embedding was supplied."""


class WindowInadequacyError(ValueError):
    """A velocity/momentum maximizer landed on the sample-window boundary.

    A boundary maximizer means the conjugate (or lookahead) value is wrong,
    so this is a hard error rather than a silent clamp.
    """


class ConvergenceError(RuntimeError):
    """Fixed-point iteration failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
