"""
Result helpers for consistent command outcomes.
Every management command reports a CommandResult: exit code, summary, paths written.
"""
from dataclasses import dataclass, field

from django.core.management.base import CommandError

from .constants import ExitCodes
from .exceptions import AMIFError


@dataclass
class CommandResult:
    exit_code: int
    summary: str
    paths: list = field(default_factory=list)

    @property
    def ok(self):
        return self.exit_code == ExitCodes.SUCCESS

    @staticmethod
    def success(summary, paths=()):
        """Create a success result."""
        return CommandResult(ExitCodes.SUCCESS, summary, [str(p) for p in paths])

    @staticmethod
    def error(summary, exit_code=ExitCodes.VALIDATION):
        """Create an error result; never carries paths."""
        return CommandResult(exit_code, summary)

    @staticmethod
    def from_exception(exc):
        """Map a domain error onto its exit code."""
        if isinstance(exc, AMIFError):
            return CommandResult.error(str(exc), exc.exit_code)
        return CommandResult.error(str(exc))

    def raise_for_status(self):
        """Raise CommandError with the exit code unless the result is a success."""
        if not self.ok:
            raise CommandError(self.summary, returncode=self.exit_code)
        return self
