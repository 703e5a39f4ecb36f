"""Exception types shared across the package.

The CLI maps these onto process exit codes (see ``mixnoise.cli``).
"""


class MixnoiseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MixnoiseError):
    """Invalid configuration, argument combination, or degenerate request."""


class ShapeError(MixnoiseError):
    """Dimension or index mismatch between arrays."""


class ResourceError(MixnoiseError):
    """A required resource (e.g. the open-set reservoir) is too small."""


class AnchorShortageError(MixnoiseError):
    """Not enough candidate anchor points to estimate a transition row."""


class DivergenceError(MixnoiseError):
    """Optimization produced a non-finite loss.

    ``payload`` carries the last finite checkpoint (params or bundle) so the
    caller can recover it.
    """

    def __init__(self, message: str, payload=None):
        super().__init__(message)
        self.payload = payload


class DependencyError(MixnoiseError):
    """A pipeline stage was invoked before its upstream artifacts exist."""
