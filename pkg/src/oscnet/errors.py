"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit
with 1, numerical failures (divergence, failed gradient checks) with 2.
"""


class OscnetError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(OscnetError, ValueError):
    """Operands with incompatible shapes; message names both shapes."""


class TapeUsageError(OscnetError, RuntimeError):
    """Misuse of the autodiff tape (e.g. backward on a non-scalar)."""


class DivergenceError(OscnetError, FloatingPointError):
    """Non-finite state encountered while integrating or training."""


class NumericalCheckError(OscnetError, FloatingPointError):
    """A numerical validation (e.g. gradient check) could not be evaluated."""


class ConfigError(OscnetError, ValueError):
    """Invalid configuration; carries a list of individual problems."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UsageError(OscnetError, ValueError):
    """Bad command-line usage or incompatible artifacts."""
