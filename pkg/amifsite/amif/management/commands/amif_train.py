from amif.services import TrainingService

from ._base import AMIFCommand


class Command(AMIFCommand):
    help = "Train AMIF from a JSON config (keys are the TrainConfig fields)."

    def add_arguments(self, parser):
        parser.add_argument('config_path')
        parser.add_argument('--resume', action='store_true',
                            help="Continue from the latest checkpoint in the run's output_dir.")

    def run_service(self, config_path, resume=False, **options):
        return TrainingService.train(config_path, resume=resume)
