"""
Domain errors for AMIF.

Every error carries the process exit code the management commands report, so
callers can tell corrupted keys from wrong-model keys from bad inputs.
"""
from django.core.exceptions import ImproperlyConfigured, PermissionDenied, ValidationError

from .constants import ExitCodes


class AMIFError(Exception):
    exit_code = ExitCodes.VALIDATION


class DimensionError(AMIFError, ValueError):
    """Tensor shapes or spatial sizes do not satisfy an operation's contract."""


class ConfigurationError(AMIFError, ImproperlyConfigured):
    """Invalid hyper-parameters, empty splits, unknown config keys."""


class InputValidationError(AMIFError, ValidationError):
    """Bad user input: unknown degradation, non-binary labels, missing files."""

    def __init__(self, message):
        ValidationError.__init__(self, message)

    def __str__(self):
        return self.message


class AuthenticationError(AMIFError, PermissionDenied):
    """Key file failed integrity checks (truncation, magic, checksum)."""
    exit_code = ExitCodes.AUTHENTICATION


class KeyIncompatibleError(AMIFError, PermissionDenied):
    """Key is intact but was issued by another checkpoint or for another shape."""
    exit_code = ExitCodes.AUTHENTICATION


class NumericError(AMIFError, ArithmeticError):
    """Non-finite tensors or losses."""
    exit_code = ExitCodes.NUMERIC
