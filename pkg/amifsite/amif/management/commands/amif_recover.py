from amif.services import RecoveryService

from ._base import AMIFCommand


class Command(AMIFCommand):
    help = "Recover the watermark-free image from a watermarked image and its key."

    def add_arguments(self, parser):
        parser.add_argument('--in', dest='image', required=True)
        parser.add_argument('--key', required=True)
        parser.add_argument('--ckpt', required=True)
        parser.add_argument('--out', required=True)

    def run_service(self, image, key, ckpt, out, **options):
        return RecoveryService.recover(image, key, ckpt, out)
