"""
Service layer for the AMIF application.
Holds the file handling and bookkeeping behind each management command, so
commands stay thin and the logic stays testable.
"""
import csv
import logging
from pathlib import Path

import torch
from django.conf import settings
from django.utils import timezone

from .checkpoints import load_checkpoint, model_fingerprint
from .constants import METRIC_FIELDS, IMAGE_EXTENSIONS, ErrorMessages, SuccessMessages
from .datasets import load_image, save_image, image_dimensions, make_synthetic_fixture
from .exceptions import AMIFError, ConfigurationError, DimensionError, InputValidationError
from .keys import read_key, write_key
from .metrics import evaluate, aggregate
from .models import FusionRecord, TrainingRun
from .pipeline import fuse_unauthorized, recover_authorized, fuse_and_recover
from .results import CommandResult
from .training import TrainConfig, Trainer

logger = logging.getLogger(__name__)


def _to_tensor(image, device):
    return torch.from_numpy(image)[None, None].to(device)


def _to_image(tensor):
    return tensor[0, 0].detach().cpu().numpy()


class FusionService:
    """
    Unauthorized fusion of one registered pair: watermarked image, key file,
    manifest line and FusionRecord.
    """

    @staticmethod
    def check_outputs(paths, force):
        """Refuse to overwrite existing outputs unless ``force``; nothing is written first."""
        for path in paths:
            if Path(path).exists() and not force:
                raise InputValidationError(ErrorMessages.OUTPUT_EXISTS.format(path=path))

    @staticmethod
    def append_manifest(record, manifest_path=None):
        manifest_path = Path(manifest_path or settings.AMIF_MANIFEST_PATH)
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        with open(manifest_path, 'a') as handle:
            handle.write(record.to_manifest() + '\n')
        return manifest_path

    @staticmethod
    def write_outputs(key_out, key, images):
        """
        Key first, then each ``(path, luma, chroma)`` image. On any failure the
        files written so far are removed.
        """
        written = []
        try:
            write_key(key_out, key)
            written.append(Path(key_out))
            for path, luma, chroma in images:
                save_image(path, luma, chroma)
                written.append(Path(path))
        except BaseException:
            for path in written:
                path.unlink(missing_ok=True)
            logger.warning("Fusion outputs not written; removed %d partial files", len(written))
            raise

    @staticmethod
    def fuse(modal_a, modal_b, ckpt, out, key_out, force=False, device=None, clean_out=None):
        """
        Fuse one pair and bind its key to the checkpoint. With ``clean_out`` the
        fresh key is also used to write the watermark-free image.

        Returns:
            CommandResult: success with the image, key and manifest paths
        """
        targets = (out, key_out) + ((clean_out,) if clean_out else ())
        FusionService.check_outputs(targets, force)
        size_a, size_b = image_dimensions(modal_a), image_dimensions(modal_b)
        if size_a != size_b:
            raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(left=size_a, right=size_b))

        device = device or settings.AMIF_DEVICE
        model = load_checkpoint(ckpt, device)
        fingerprint = model_fingerprint(model)
        a, _ = load_image(modal_a, model.image_size)
        b, chroma = load_image(modal_b, model.image_size)
        a, b = _to_tensor(a, device), _to_tensor(b, device)
        with torch.inference_mode():
            if clean_out:
                result = fuse_and_recover(a, b, model, fingerprint)
                key = result.key
                images = [(out, _to_image(result.watermarked_image), chroma),
                          (clean_out, _to_image(result.clean_image), chroma)]
            else:
                i_wf, key = fuse_unauthorized(a, b, model, fingerprint)
                images = [(out, _to_image(i_wf), chroma)]

        FusionService.write_outputs(key_out, key, images)
        record = FusionRecord.objects.create(
            pair_id=Path(modal_a).stem,
            modal_a_path=str(modal_a),
            modal_b_path=str(modal_b),
            image_path=str(out),
            key_path=str(key_out),
            fingerprint=fingerprint.hex(),
        )
        manifest = FusionService.append_manifest(record)
        logger.info("Fused %s + %s with checkpoint %s", modal_a, modal_b, fingerprint.hex())
        return CommandResult.success(
            SuccessMessages.FUSED.format(pair=record.pair_id, image=out, key=key_out),
            paths=tuple(targets) + (manifest,),
        )


class RecoveryService:
    """Authorized recovery of the watermark-free image from a watermarked image and its key."""

    @staticmethod
    def recover(image_path, key_path, ckpt, out, device=None):
        key = read_key(key_path)
        device = device or settings.AMIF_DEVICE
        model = load_checkpoint(ckpt, device)
        fingerprint = model_fingerprint(model)

        i_wf, chroma = load_image(image_path, model.image_size)
        with torch.inference_mode():
            i_f, _ = recover_authorized(_to_tensor(i_wf, device), key, model, fingerprint)
        save_image(out, _to_image(i_f), chroma)
        logger.info("Recovered %s with key %s", image_path, key_path)
        message = SuccessMessages.RECOVERED.format(image=out)
        record = FusionRecord.for_key(key_path)
        if record is not None:
            message += f" Key issued for pair \"{record.pair_id}\" on {record.created_at:%Y-%m-%d}."
        return CommandResult.success(message, paths=(out,))


class EvaluationService:
    """Fusion metrics over a directory of predictions matched to source pairs by filename."""

    @staticmethod
    def match(pred_dir, src_a_dir, src_b_dir):
        """
        Returns:
            tuple: (matched stems, skipped messages)
        """
        folders = [Path(p) for p in (pred_dir, src_a_dir, src_b_dir)]
        for folder in folders:
            if not folder.is_dir():
                raise ConfigurationError(ErrorMessages.MISSING_PATH.format(path=folder))
        stems = [{p.stem for p in folder.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS}
                 for folder in folders]
        matched, skipped = [], []
        for stem in sorted(stems[0]):
            missing = [folder for folder, names in zip(folders[1:], stems[1:]) if stem not in names]
            if missing:
                skipped.append(ErrorMessages.UNPAIRED_FILE.format(name=stem, folder=missing[0]))
            else:
                matched.append(stem)
        for message in skipped:
            logger.warning(message)
        return matched, skipped

    @staticmethod
    def evaluate(pred_dir, src_a_dir, src_b_dir, out_csv):
        matched, skipped = EvaluationService.match(pred_dir, src_a_dir, src_b_dir)
        if not matched:
            raise InputValidationError(ErrorMessages.EMPTY_SPLIT.format(split=pred_dir))

        rows = []
        for stem in matched:
            fused, _ = load_image(Path(pred_dir) / f'{stem}.png')
            size = fused.shape[0] if fused.shape[0] == fused.shape[1] else None
            a, _ = load_image(Path(src_a_dir) / f'{stem}.png', size)
            b, _ = load_image(Path(src_b_dir) / f'{stem}.png', size)
            if not fused.shape == a.shape == b.shape:
                skipped.append(ErrorMessages.SHAPE_MISMATCH.format(left=fused.shape, right=a.shape))
                logger.warning("Skipping %s: %s", stem, skipped[-1])
                continue
            rows.append((stem, evaluate(fused, a, b)))
        if not rows:
            raise InputValidationError(ErrorMessages.EMPTY_SPLIT.format(split=pred_dir))

        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(('pair_id',) + METRIC_FIELDS)
            for stem, report in rows:
                writer.writerow([stem] + [f'{v:.6f}' for v in report.as_row()])
            mean = aggregate(report for _, report in rows)
            writer.writerow(['mean'] + [f'{v:.6f}' for v in mean.as_row()])

        summary = SuccessMessages.EVALUATED.format(count=len(rows), csv=out_csv)
        if skipped:
            summary += f" Skipped {len(skipped)}: " + '; '.join(skipped)
        return CommandResult.success(summary, paths=(out_csv,))


class TrainingService:
    """Runs a training config and tracks it as a TrainingRun."""

    @staticmethod
    def load_config(config_path):
        config = TrainConfig.from_json(config_path)
        if settings.AMIF_SEED is not None:
            config.seed = settings.AMIF_SEED
        if not config.data_root:
            config.data_root = str(settings.AMIF_DATA_ROOT)
        if not Path(config.data_root).is_dir():
            raise ConfigurationError(ErrorMessages.MISSING_PATH.format(path=config.data_root))
        if config.device == 'cpu' and settings.AMIF_DEVICE != 'cpu':
            config.device = settings.AMIF_DEVICE
        return config

    @staticmethod
    def train(config_path, resume=False):
        config = TrainingService.load_config(config_path)
        run = TrainingRun.objects.create(config=config.to_dict(), output_dir=str(config.output_dir))
        try:
            result = Trainer(config).fit(resume=resume)
        except AMIFError as exc:
            run.status = TrainingRun.STATUS_FAILED
            run.error_message = str(exc)
            run.finished_at = timezone.now()
            run.save()
            raise
        run.status = TrainingRun.STATUS_FINISHED
        run.steps_completed = result.steps
        run.final_fingerprint = result.fingerprint.hex()
        run.finished_at = timezone.now()
        run.save()
        return CommandResult.success(
            SuccessMessages.TRAINED.format(steps=result.steps, checkpoint=result.checkpoint),
            paths=(result.checkpoint, result.log_path),
        )


class FixtureService:
    @staticmethod
    def create(root, pairs, size, seed):
        spec = make_synthetic_fixture(root, pairs, size, seed)
        return CommandResult.success(
            SuccessMessages.FIXTURE.format(count=pairs, root=spec.root), paths=(spec.root,))
