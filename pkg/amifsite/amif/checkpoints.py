"""
Model archives and training state.

Inference checkpoints are numpy ``.npz`` archives: every parameter under its
dotted name as little-endian float32, plus ``__config__`` (ModelConfig JSON)
and ``__format__``. Training state for ``--resume`` is a torch-serialized dict.
"""
import hashlib
import io
import json
import logging
from pathlib import Path

import numpy as np
import torch

from .constants import (
    CHECKPOINT_FORMAT, CHECKPOINT_CONFIG_ENTRY, CHECKPOINT_FORMAT_ENTRY,
    KEY_FINGERPRINT_BYTES, ErrorMessages,
)
from .exceptions import ConfigurationError
from .keys import atomic_write_bytes
from .network import AMIFNet, ModelConfig

logger = logging.getLogger(__name__)


def _state_arrays(model):
    return {name: tensor.detach().cpu().numpy().astype('<f4')
            for name, tensor in model.state_dict().items()}


def model_fingerprint(model):
    """BLAKE2b-128 over (name, little-endian float32 bytes) in sorted name order."""
    digest = hashlib.blake2b(digest_size=KEY_FINGERPRINT_BYTES)
    for name, array in sorted(_state_arrays(model).items()):
        digest.update(name.encode('utf-8'))
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.digest()


def save_checkpoint(model, path):
    arrays = _state_arrays(model)
    arrays[CHECKPOINT_CONFIG_ENTRY] = np.array(json.dumps(model.config.to_dict()))
    arrays[CHECKPOINT_FORMAT_ENTRY] = np.array(CHECKPOINT_FORMAT)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    atomic_write_bytes(path, buffer.getvalue())
    logger.info("Saved checkpoint %s (%d tensors)", path, len(arrays) - 2)
    return Path(path)


def load_checkpoint(path, device='cpu'):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(ErrorMessages.MISSING_PATH.format(path=path))
    try:
        with np.load(path, allow_pickle=False) as archive:
            if str(archive[CHECKPOINT_FORMAT_ENTRY]) != CHECKPOINT_FORMAT:
                raise ConfigurationError(ErrorMessages.BAD_CHECKPOINT.format(path=path))
            config = ModelConfig.from_dict(json.loads(str(archive[CHECKPOINT_CONFIG_ENTRY])))
            state = {name: torch.from_numpy(archive[name].astype(np.float32))
                     for name in archive.files
                     if name not in (CHECKPOINT_CONFIG_ENTRY, CHECKPOINT_FORMAT_ENTRY)}
    except (KeyError, ValueError, OSError) as exc:
        logger.warning("Unreadable checkpoint %s: %s", path, exc)
        raise ConfigurationError(ErrorMessages.BAD_CHECKPOINT.format(path=path))

    model = AMIFNet(config)
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        logger.warning("Checkpoint %s does not match its config: %s", path, exc)
        raise ConfigurationError(ErrorMessages.BAD_CHECKPOINT.format(path=path))
    return model.to(device).eval()


def save_training_state(path, *, optimizer, scheduler, epoch, step, batch=0):
    """
    ``epoch`` is the 0-based epoch in progress and ``batch`` the number of its
    batches already trained on.
    """
    state = {
        'optimizer': optimizer.state_dict(),
        'scheduler': scheduler.state_dict(),
        'epoch': epoch,
        'batch': batch,
        'step': step,
        'torch_rng': torch.get_rng_state(),
    }
    buffer = io.BytesIO()
    torch.save(state, buffer)
    atomic_write_bytes(path, buffer.getvalue())


def load_training_state(path, *, optimizer, scheduler):
    """Restore optimizer, scheduler and the torch RNG in place; returns (epoch, batch, step)."""
    # written by save_training_state only
    state = torch.load(path, map_location='cpu', weights_only=False)
    optimizer.load_state_dict(state['optimizer'])
    scheduler.load_state_dict(state['scheduler'])
    torch.set_rng_state(state['torch_rng'])
    return state['epoch'], state.get('batch', 0), state['step']
