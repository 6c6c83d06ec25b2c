from django.conf import settings

from amif.constants import DEFAULT_IMAGE_SIZE, DEFAULT_SEED
from amif.services import FixtureService

from ._base import AMIFCommand


class Command(AMIFCommand):
    help = "Write a synthetic registered dataset plus the watermark label."

    def add_arguments(self, parser):
        parser.add_argument('--root', default=None, help="Defaults to AMIF_DATA_ROOT.")
        parser.add_argument('--pairs', type=int, default=8, help="Pairs per split.")
        parser.add_argument('--size', type=int, default=DEFAULT_IMAGE_SIZE)
        parser.add_argument('--seed', type=int, default=DEFAULT_SEED)

    def run_service(self, root=None, pairs=8, size=DEFAULT_IMAGE_SIZE, seed=DEFAULT_SEED, **options):
        return FixtureService.create(root or settings.AMIF_DATA_ROOT, pairs, size, seed)
