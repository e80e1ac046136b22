"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation problems exit with 2,
numeric failures with 3 (usage errors from argument parsing exit with 1).
"""


class CormsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(CormsError):
    """Bad user input: malformed data files, inconsistent configuration."""


class ConfigError(ValidationError):
    """Run configuration file is missing, malformed, or inconsistent."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnsupportedKernelError(ValidationError):
    """Requested functional is undefined for the configured kernel."""


class NumericError(CormsError):
    """A numerical routine failed to meet its tolerance or hit a guard."""


class QuadratureError(NumericError):
    """Adaptive quadrature exceeded its panel budget or met a bad value."""


class RootFindError(NumericError):
    """Monotone tail inversion could not bracket or refine the root."""


class JumpCapError(NumericError):
    """A trajectory would exceed the configured jump-count cap."""


class DegenerateMeasureError(NumericError):
    """A random measure with zero total mass cannot be normalized."""
