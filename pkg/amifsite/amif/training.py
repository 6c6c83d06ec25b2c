"""
Training protocol: joint unauthorized + authorized objective every step, Adam,
step learning-rate decay per epoch, gradient clipping, CSV loss log and
resumable checkpoints.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .checkpoints import (
    save_checkpoint, load_checkpoint, save_training_state, load_training_state, model_fingerprint,
)
from .constants import (
    DEFAULT_EPOCHS, DEFAULT_BATCH_SIZE, DEFAULT_LR, DEFAULT_LR_DECAY, DEFAULT_LR_STEP_EPOCHS,
    ADAM_BETAS, GRAD_CLIP_NORM, DEFAULT_SEED, ErrorMessages,
)
from .datasets import DatasetSpec, PairDataset, load_pairs, load_label, make_watermark_label
from .exceptions import ConfigurationError, NumericError
from .losses import (
    LossBundle, LossWeights, intensity_loss, gradient_loss, decomposition_loss, key_recovery_loss,
    watermark_bce, watermark_dice, wm_pixel_loss, wm_lowfreq_loss, total_loss,
)
from .network import AMIFNet, ModelConfig
from .pipeline import WatermarkLabel, forward_pass, lowfreq_targets

logger = logging.getLogger(__name__)

LOG_FILE = 'losses.csv'
CHECKPOINT_DIR = 'checkpoints'
LATEST_MODEL = 'latest.npz'
LATEST_STATE = 'training_state.pt'
FINAL_MODEL = 'model.npz'

@dataclass
class TrainConfig:
    data_root: str = ''
    output_dir: str = 'runs/amif'
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    lr: float = DEFAULT_LR
    lr_decay: float = DEFAULT_LR_DECAY
    lr_step_epochs: int = DEFAULT_LR_STEP_EPOCHS
    betas: tuple = ADAM_BETAS
    grad_clip: float = GRAD_CLIP_NORM
    seed: int = DEFAULT_SEED
    max_steps: int = 0
    max_angle: float = 0.0
    log_every: int = 10
    checkpoint_every: int = 1
    device: str = 'cpu'
    num_workers: int = 0
    model: dict = field(default_factory=dict)
    loss_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        for name in ('epochs', 'batch_size', 'lr', 'lr_step_epochs', 'grad_clip', 'log_every', 'checkpoint_every'):
            if getattr(self, name) <= 0:
                raise ConfigurationError(ErrorMessages.BAD_COUNT.format(name=name, value=getattr(self, name)))
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(reason='lr_decay must be in (0, 1]'))
        for name in ('max_steps', 'num_workers'):
            if getattr(self, name) < 0:
                raise ConfigurationError(ErrorMessages.BAD_COUNT.format(name=name, value=getattr(self, name)))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(ErrorMessages.UNKNOWN_CONFIG_KEYS.format(keys=', '.join(unknown)))
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(ErrorMessages.MISSING_PATH.format(path=path))
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(reason=exc))
        if not isinstance(data, dict):
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(reason='top level must be an object'))
        return cls.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data['betas'] = list(self.betas)
        return data

    def model_config(self):
        return ModelConfig.from_dict(self.model)

    def weights(self):
        return LossWeights(**self.loss_weights)

def lr_at_epoch(cfg, epoch):
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_step_epochs)

def check_finite(bundle, step):
    for name, value in bundle.items():
        if not torch.isfinite(value).all():
            raise NumericError(ErrorMessages.NON_FINITE_LOSS.format(term=name, step=step))

def compute_losses(model, a, b, label, weights=LossWeights(), step=0):
    out = forward_pass(model, a, b)
    wf_ll, f_ll, wmt_ll = lowfreq_targets(model, out, label)
    bundle = LossBundle(
        l_int=intensity_loss(out.clean_image, a, b),
        l_grad=gradient_loss(out.clean_image, a, b),
        l_decomp=decomposition_loss(out.decomposed, weights.decomp_epsilon),
        l_krecov=key_recovery_loss(out.recovered_features, out.fused_features),
        l_bce=watermark_bce(out.watermark_logits, label),
        l_dice=watermark_dice(out.watermark_logits, label, weights.dice_epsilon),
        l_wm=wm_pixel_loss(out.watermarked_image, a, b, label),
        l_wmlow=wm_lowfreq_loss(wf_ll, f_ll, wmt_ll),
    )
    bundle.total = total_loss(bundle, weights)
    check_finite(bundle, step)
    return bundle

def make_optimizer(model, cfg):
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)
    scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=cfg.lr_step_epochs, gamma=cfg.lr_decay)
    return optimizer, scheduler

def train_step(model, optimizer, batch, label, cfg, step=0):
    """One optimizer update on both paths; raises NumericError naming a non-finite term."""
    model.train()
    a, b = batch
    optimizer.zero_grad(set_to_none=True)
    bundle = compute_losses(model, a, b, label, cfg.weights(), step)
    bundle.total.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    optimizer.step()
    return bundle

def epoch_loader(dataset, batch_size, seed, epoch, skip_batches=0, num_workers=0):
    """
    Batches of one epoch in seeded order. The order depends only on (seed,
    epoch); ``skip_batches`` drops the batches a resumed run already trained on.
    """
    dataset.set_epoch(epoch)
    generator = torch.Generator().manual_seed(int(np.random.SeedSequence((seed, epoch)).generate_state(1)[0]))
    order = torch.randperm(len(dataset), generator=generator).tolist()
    return DataLoader(dataset, batch_size=batch_size, sampler=order[skip_batches * batch_size:],
                      num_workers=num_workers)

@dataclass
class TrainingResult:
    steps: int
    epochs: int
    checkpoint: Path
    log_path: Path
    fingerprint: bytes
    history: list

class Trainer:
    """Runs TrainConfig end to end; ``fit(resume=True)`` continues from the latest checkpoint."""

    def __init__(self, config, spec=None):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.device = torch.device(config.device)
        self.model_config = config.model_config()
        self.spec = spec or DatasetSpec.from_root(config.data_root, self.model_config.encoder.image_size)
        self.log_path = self.output_dir / LOG_FILE
        self.checkpoint_dir = self.output_dir / CHECKPOINT_DIR

    def _label(self):
        size = self.model_config.encoder.image_size
        if self.spec.label_path.exists():
            mask = load_label(self.spec.label_path, size)
        else:
            logger.warning("No watermark label at %s; rendering the default label", self.spec.label_path)
            mask = make_watermark_label(size)
        return WatermarkLabel(torch.from_numpy(mask))

    def _read_history(self, step):
        if not self.log_path.exists():
            return []
        with open(self.log_path, newline='') as handle:
            return [row for row in csv.DictReader(handle) if int(row['step']) < step]

    def _write_history(self, history):
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        columns = ['step', 'epoch'] + list(LossBundle.TERMS) + ['total', 'lr']
        with open(self.log_path, 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=columns)
            writer.writeheader()
            writer.writerows(history)

    def _save(self, model, optimizer, scheduler, epoch, batch, step, history):
        save_checkpoint(model, self.checkpoint_dir / LATEST_MODEL)
        save_training_state(self.checkpoint_dir / LATEST_STATE, optimizer=optimizer,
                            scheduler=scheduler, epoch=epoch, step=step, batch=batch)
        self._write_history(history)

    def _stopped(self, step):
        return bool(self.config.max_steps) and step >= self.config.max_steps

    def fit(self, resume=False):
        cfg = self.config
        torch.manual_seed(cfg.seed)
        dataset = PairDataset(load_pairs(self.spec, 'train'), cfg.seed, cfg.max_angle)
        batches_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
        label = self._label()

        state_path = self.checkpoint_dir / LATEST_STATE
        if resume and state_path.exists():
            model = load_checkpoint(self.checkpoint_dir / LATEST_MODEL, self.device)
            optimizer, scheduler = make_optimizer(model, cfg)
            epoch, batch, step = load_training_state(state_path, optimizer=optimizer, scheduler=scheduler)
            history = self._read_history(step)
            logger.info("Resuming at epoch %d, batch %d, step %d", epoch, batch, step)
        else:
            if resume:
                logger.warning("Nothing to resume under %s; starting fresh", self.checkpoint_dir)
            model = AMIFNet(self.model_config).to(self.device)
            optimizer, scheduler = make_optimizer(model, cfg)
            epoch, batch, step, history = 0, 0, 0, []

        while epoch < cfg.epochs and not self._stopped(step):
            loader = epoch_loader(dataset, cfg.batch_size, cfg.seed, epoch, batch, cfg.num_workers)
            for a, b in loader:
                if self._stopped(step):
                    break
                a, b = a.to(self.device), b.to(self.device)
                bundle = train_step(model, optimizer, (a, b), label.batch(a.shape[0], self.device), cfg, step)
                row = {'step': step, 'epoch': epoch, 'lr': optimizer.param_groups[0]['lr']}
                row.update(bundle.as_floats())
                history.append(row)
                if step % cfg.log_every == 0:
                    logger.info("step %d epoch %d total %.5f krecov %.5f dice %.5f lr %.2e",
                                step, epoch, row['total'], row['l_krecov'], row['l_dice'], row['lr'])
                step += 1
                batch += 1
            if batch < batches_per_epoch:
                # stopped inside the epoch; resume picks up at this batch
                break
            scheduler.step()
            epoch, batch = epoch + 1, 0
            if epoch % cfg.checkpoint_every == 0:
                self._save(model, optimizer, scheduler, epoch, batch, step, history)

        self._save(model, optimizer, scheduler, epoch, batch, step, history)
        final = save_checkpoint(model, self.output_dir / FINAL_MODEL)
        fingerprint = model_fingerprint(model)
        logger.info("Training finished: %d steps, fingerprint %s", step, fingerprint.hex())
        return TrainingResult(steps=step, epochs=epoch, checkpoint=final, log_path=self.log_path,
                              fingerprint=fingerprint, history=history)

def history_column(history, name):
    return [float(row[name]) for row in history]

def relative_drop(values):
    """Fractional decrease from the first to the mean of the last tenth of ``values``."""
    if not values or values[0] == 0:
        return 0.0
    tail = values[-max(1, len(values) // 10):]
    return 1.0 - (sum(tail) / len(tail)) / values[0]
