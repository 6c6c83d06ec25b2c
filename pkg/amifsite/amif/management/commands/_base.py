"""
Shared plumbing for the amif_* commands: domain errors become CommandError
with the matching exit code.
"""
import logging

from django.core.management.base import BaseCommand

from amif.exceptions import AMIFError
from amif.results import CommandResult

logger = logging.getLogger(__name__)


class AMIFCommand(BaseCommand):

    def run_service(self, *args, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            result = self.run_service(**options)
        except AMIFError as exc:
            logger.warning("%s failed: %s", self.__module__.rsplit('.', 1)[-1], exc)
            result = CommandResult.from_exception(exc)
        result.raise_for_status()
        self.stdout.write(self.style.SUCCESS(result.summary))
        for path in result.paths:
            self.stdout.write(f"  {path}")
