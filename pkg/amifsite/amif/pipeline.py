"""
End-to-end paths through AMIFNet.

Unauthorized: encode, fuse, generate the watermark feature, wavelet-pack both
streams, protect, decode the content stream into a visibly watermarked image
and emit the key.

Authorized: re-encode the watermarked image, run the inverse coupling with
the key, decode the recovered content stream into the clean image and the
recovered watermark stream into watermark logits.

The watermark label is only ever consumed by ``forward_pass`` during training.
"""
import logging
from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .checkpoints import model_fingerprint
from .constants import (
    LABEL_FRACTION_RANGE, DEGRADATION_KINDS, BLUR_SIGMA, MEDIAN_SIZE, NOISE_SIGMA,
    LABEL_EVIDENCE_THRESHOLD, ErrorMessages,
)
from .exceptions import DimensionError, InputValidationError
from .keys import NULL_FINGERPRINT
from .wavelet import dwt2_packed, idwt2_packed, low_band

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WatermarkLabel:
    """Binary (H, W) mask whose positive fraction stays within LABEL_FRACTION_RANGE."""
    mask: torch.Tensor

    def __post_init__(self):
        if self.mask.dim() != 2:
            raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
                left='(H, W)', right=tuple(self.mask.shape)))
        if not torch.all((self.mask == 0) | (self.mask == 1)):
            raise InputValidationError(ErrorMessages.BAD_LABEL)
        low, high = LABEL_FRACTION_RANGE
        if not low <= self.fraction <= high:
            raise InputValidationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'label positive fraction {self.fraction:.3f} outside [{low}, {high}]'))

    @property
    def fraction(self):
        return float(self.mask.float().mean())

    def batch(self, batch_size, device=None, dtype=torch.float32):
        return self.mask.to(device=device, dtype=dtype).expand(batch_size, 1, *self.mask.shape)


@dataclass
class FusionOutput:
    watermarked_image: torch.Tensor
    clean_image: torch.Tensor
    key: object
    predicted_watermark: torch.Tensor


@dataclass
class ForwardPass:
    """Every intermediate the training losses read."""
    decomposed: object
    fused_features: torch.Tensor
    protected: torch.Tensor
    key_payload: torch.Tensor
    watermarked_image: torch.Tensor
    recovered_features: torch.Tensor
    clean_image: torch.Tensor
    watermark_logits: torch.Tensor


def _check_pair(a, b):
    if a.shape != b.shape:
        raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
            left=tuple(a.shape), right=tuple(b.shape)))


def _protect(model, a, b, fingerprint):
    d = model.decompose(a, b)
    f_fused = model.fusion(d)
    f_wm = model.watermark(a, b)
    protected, key = model.coupling.protect(dwt2_packed(f_fused), dwt2_packed(f_wm), fingerprint)
    return d, f_fused, protected, key


def _recover(model, i_wf, key, fingerprint):
    packed = dwt2_packed(model.shared_encode(i_wf))
    f_recov, w_recov = model.coupling.recover(packed, key, fingerprint)
    f_recov = idwt2_packed(f_recov)
    return f_recov, model.decode(f_recov), model.watermark_head(idwt2_packed(w_recov))


def fuse_unauthorized(a, b, model, fingerprint=None):
    """Returns (I_wf, key); the key is bound to ``fingerprint`` (the model's own by default)."""
    _check_pair(a, b)
    if fingerprint is None:
        fingerprint = model_fingerprint(model)
    _, _, protected, key = _protect(model, a, b, fingerprint)
    return model.decode(idwt2_packed(protected)), key


def recover_authorized(i_wf, key, model, fingerprint=None):
    """Returns (I_f, I_pwm logits). Raises KeyIncompatibleError for another checkpoint's key."""
    if fingerprint is None:
        fingerprint = model_fingerprint(model)
    _, i_f, i_pwm = _recover(model, i_wf, key, fingerprint)
    return i_f, i_pwm


def fuse_clean(a, b, model):
    """Direct clean path: decode the fused features without protect/recover."""
    _check_pair(a, b)
    return model.decode(model.fusion(model.decompose(a, b)))


def fuse_and_recover(a, b, model, fingerprint=None):
    """Unauthorized fusion immediately followed by authorized recovery with the fresh key."""
    if fingerprint is None:
        fingerprint = model_fingerprint(model)
    i_wf, key = fuse_unauthorized(a, b, model, fingerprint)
    i_f, i_pwm = recover_authorized(i_wf, key, model, fingerprint)
    return FusionOutput(watermarked_image=i_wf, clean_image=i_f, key=key, predicted_watermark=i_pwm)


def forward_pass(model, a, b):
    """Both paths in one differentiable pass; keys are not bound to a fingerprint here."""
    _check_pair(a, b)
    d, f_fused, protected, key = _protect(model, a, b, NULL_FINGERPRINT)
    i_wf = model.decode(idwt2_packed(protected))
    f_recov, i_f, i_pwm = _recover(model, i_wf, key, None)
    return ForwardPass(
        decomposed=d,
        fused_features=f_fused,
        protected=protected,
        key_payload=key.payload,
        watermarked_image=i_wf,
        recovered_features=f_recov,
        clean_image=i_f,
        watermark_logits=i_pwm,
    )


def lowfreq_targets(model, step, label):
    """LL bands for the watermark low-frequency loss: (protected, fused, label features)."""
    return (low_band(step.protected),
            low_band(dwt2_packed(step.fused_features)),
            low_band(dwt2_packed(model.shared_encode(label))))


def degrade(img, kind, seed=0):
    """Blur, median or additive-noise degradation of a (B, C, H, W) batch in [0, 1]."""
    if kind not in DEGRADATION_KINDS:
        raise InputValidationError(ErrorMessages.UNKNOWN_DEGRADATION.format(
            kind=kind, kinds=', '.join(DEGRADATION_KINDS)))
    array = img.detach().cpu().numpy().astype(np.float64)
    if kind == 'gaussian_blur':
        out = ndimage.gaussian_filter(array, sigma=(0, 0, BLUR_SIGMA, BLUR_SIGMA), mode='reflect')
    elif kind == 'median':
        out = ndimage.median_filter(array, size=(1, 1, MEDIAN_SIZE, MEDIAN_SIZE), mode='reflect')
    else:
        rng = np.random.default_rng(seed)
        out = np.clip(array + rng.normal(0.0, NOISE_SIGMA, size=array.shape), 0.0, 1.0)
    return torch.from_numpy(out).to(device=img.device, dtype=img.dtype)


def label_evidence(i_wf, a, b):
    """3 * I_wf - (a + b): equals the label wherever I_wf meets its (a + b + label) / 3 target."""
    return 3 * i_wf - (a + b)


def residual_dice(i_wf, a, b, label, threshold=LABEL_EVIDENCE_THRESHOLD):
    """
    Dice overlap between the thresholded label evidence 3 * I_wf - (a + b) and
    the label. The residual I_wf - (a + b) / 2 is not used: the watermarked
    target is (a + b + label) / 3, under which that residual equals
    label / 3 - (a + b) / 6 and depends on the sources.
    """
    predicted = (label_evidence(i_wf, a, b) > threshold).float().flatten(1)
    label = label.float().flatten(1)
    overlap = (predicted * label).sum(dim=1)
    total = predicted.sum(dim=1) + label.sum(dim=1)
    dice = torch.where(total > 0, 2 * overlap / total.clamp(min=1), torch.ones_like(total))
    return float(dice.mean())
