from amif.services import FusionService

from ._base import AMIFCommand


class Command(AMIFCommand):
    help = "Fuse a registered pair into a watermarked image and write its key."

    def add_arguments(self, parser):
        parser.add_argument('--modal-a', required=True)
        parser.add_argument('--modal-b', required=True)
        parser.add_argument('--ckpt', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--key-out', required=True)
        parser.add_argument('--clean-out', help="Also write the key-recovered watermark-free image here.")
        parser.add_argument('--force', action='store_true', help="Overwrite existing outputs.")

    def run_service(self, modal_a, modal_b, ckpt, out, key_out, clean_out=None, force=False, **options):
        return FusionService.fuse(modal_a, modal_b, ckpt, out, key_out, force=force, clean_out=clean_out)
