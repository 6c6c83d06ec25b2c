"""
Training objectives.

Authorized mode (clean fusion): intensity, gradient, decomposition and
key-recovery terms. Unauthorized mode (visible watermark): BCE and Dice on the
predicted watermark, pixel and low-frequency watermark terms. ``total_loss``
combines them with LossWeights.
"""
import logging
from dataclasses import dataclass, asdict, fields

import torch
import torch.nn.functional as F

from .constants import LOSS_WEIGHTS, DECOMP_EPSILON, DICE_EPSILON, ErrorMessages
from .exceptions import ConfigurationError, DimensionError, InputValidationError

logger = logging.getLogger(__name__)

SOBEL_X = torch.tensor([[-1., 0., 1.], [-2., 0., 2.], [-1., 0., 1.]])
SOBEL_Y = SOBEL_X.t().contiguous()
_SQRT_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    grad: float = LOSS_WEIGHTS[0]
    decomp: float = LOSS_WEIGHTS[1]
    krecov: float = LOSS_WEIGHTS[2]
    watermark: float = LOSS_WEIGHTS[3]
    segmentation: float = LOSS_WEIGHTS[4]
    decomp_epsilon: float = DECOMP_EPSILON
    dice_epsilon: float = DICE_EPSILON

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigurationError(ErrorMessages.BAD_COUNT.format(
                    name=f.name, value=getattr(self, f.name)))
        if self.decomp_epsilon <= 1:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason='decomp_epsilon must exceed 1'))

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBundle:
    l_int: torch.Tensor
    l_grad: torch.Tensor
    l_decomp: torch.Tensor
    l_krecov: torch.Tensor
    l_bce: torch.Tensor
    l_dice: torch.Tensor
    l_wm: torch.Tensor
    l_wmlow: torch.Tensor
    total: torch.Tensor = None

    TERMS = ('l_int', 'l_grad', 'l_decomp', 'l_krecov', 'l_bce', 'l_dice', 'l_wm', 'l_wmlow')

    def items(self):
        names = self.TERMS + (('total',) if self.total is not None else ())
        return [(name, getattr(self, name)) for name in names]

    def as_floats(self):
        return {name: float(value.detach()) for name, value in self.items()}


def _same_shape(*tensors):
    shapes = {tuple(t.shape) for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
            left=tuple(tensors[0].shape), right=sorted(shapes)))


def _check_label(label):
    if not torch.all((label == 0) | (label == 1)):
        raise InputValidationError(ErrorMessages.BAD_LABEL)


def sobel_magnitude(img):
    """Per-channel Sobel gradient magnitude with reflect padding."""
    channels = img.shape[1]
    kernels = torch.stack((SOBEL_X, SOBEL_Y)).to(img).unsqueeze(1).repeat(channels, 1, 1, 1)
    grads = F.conv2d(F.pad(img, (1, 1, 1, 1), mode='reflect'), kernels, groups=channels)
    gx, gy = grads[:, 0::2], grads[:, 1::2]
    return torch.sqrt(gx ** 2 + gy ** 2 + _SQRT_EPS)


def intensity_loss(i_f, i_a, i_b):
    _same_shape(i_f, i_a, i_b)
    return (i_f - torch.maximum(i_a, i_b)).abs().mean()


def gradient_loss(i_f, i_a, i_b):
    _same_shape(i_f, i_a, i_b)
    target = torch.maximum(sobel_magnitude(i_a), sobel_magnitude(i_b))
    return (sobel_magnitude(i_f) - target).abs().mean()


def correlation(x, y):
    """Pearson correlation per batch item over all remaining elements; zero-variance items give 0."""
    _same_shape(x, y)
    x = x.flatten(1) - x.flatten(1).mean(dim=1, keepdim=True)
    y = y.flatten(1) - y.flatten(1).mean(dim=1, keepdim=True)
    denom = torch.sqrt((x ** 2).sum(dim=1) * (y ** 2).sum(dim=1))
    degenerate = denom == 0
    if degenerate.any():
        logger.warning("Zero-variance features in %d of %d items; correlation set to 0",
                       int(degenerate.sum()), len(denom))
    safe = torch.where(degenerate, torch.ones_like(denom), denom)
    return torch.where(degenerate, torch.zeros_like(denom), (x * y).sum(dim=1) / safe)


def decomposition_loss(d, epsilon=DECOMP_EPSILON):
    cc_detail = correlation(d.detail_a, d.detail_b)
    cc_base = correlation(d.base_a, d.base_b)
    return (cc_detail ** 2 / (cc_base + epsilon)).mean()


def key_recovery_loss(f_recov, f_ori):
    _same_shape(f_recov, f_ori)
    return F.mse_loss(f_recov, f_ori)


def watermark_bce(pred_logits, wm_label):
    _same_shape(pred_logits, wm_label)
    _check_label(wm_label)
    return F.binary_cross_entropy_with_logits(pred_logits, wm_label.to(pred_logits.dtype))


def watermark_dice(pred_logits, wm_label, epsilon=DICE_EPSILON):
    _same_shape(pred_logits, wm_label)
    _check_label(wm_label)
    prob = torch.sigmoid(pred_logits).flatten(1)
    label = wm_label.flatten(1).to(prob.dtype)
    overlap = (prob * label).sum(dim=1)
    return (1 - 2 * overlap / (prob.sum(dim=1) + label.sum(dim=1) + epsilon)).mean()


def wm_pixel_loss(i_wf, i_a, i_b, i_wt):
    _same_shape(i_wf, i_a, i_b, i_wt)
    return F.mse_loss(i_wf, (i_a + i_b + i_wt) / 3)


def wm_lowfreq_loss(f_wf_ll, f_f_ll, f_wmt_ll):
    _same_shape(f_wf_ll, f_f_ll, f_wmt_ll)
    return F.mse_loss(f_wf_ll, (f_f_ll + f_wmt_ll) / 2)


def total_loss(bundle, w=LossWeights()):
    fusion = bundle.l_int + w.grad * bundle.l_grad + w.decomp * bundle.l_decomp + w.krecov * bundle.l_krecov
    watermark = (bundle.l_wm + bundle.l_wmlow) + w.segmentation * (bundle.l_bce + bundle.l_dice)
    return fusion + w.watermark * watermark
