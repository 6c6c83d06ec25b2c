from amif.services import EvaluationService

from ._base import AMIFCommand


class Command(AMIFCommand):
    help = "Score fused images (SF, MI, VIF, Qabf, SSIM) into a CSV with a mean row."

    def add_arguments(self, parser):
        parser.add_argument('--pred-dir', required=True)
        parser.add_argument('--src-a-dir', required=True)
        parser.add_argument('--src-b-dir', required=True)
        parser.add_argument('--out-csv', required=True)

    def run_service(self, pred_dir, src_a_dir, src_b_dir, out_csv, **options):
        return EvaluationService.evaluate(pred_dir, src_a_dir, src_b_dir, out_csv)
