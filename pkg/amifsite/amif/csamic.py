"""
Invertible coupling blocks that write the watermark stream into the content
stream (forward) and strip it again given the key (inverse).

Forward, per block:
    f' = f + varphi(w)
    w' = w * delta(f') * exp(alpha(eta(f') * phi(f'))) + mu(f')
Inverse:
    w = (k - mu(c)) / (delta(c) * exp(alpha(eta(c) * phi(c))))
    f = c - varphi(w)

delta is the only divisor and is bounded to [DELTA_MIN, DELTA_MAX].
"""
import logging
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn

from .constants import (
    DEFAULT_COUPLING_BLOCKS, MIN_COUPLING_BLOCKS, MAX_COUPLING_BLOCKS,
    DEFAULT_ALPHA_SCALE, MAX_ALPHA_SCALE, DELTA_MIN, DELTA_MAX, SE_REDUCTION,
    SPATIAL_KERNEL, DENSE_GROWTH, DENSE_LAYERS, ErrorMessages,
)
from .exceptions import ConfigurationError, DimensionError, NumericError
from .fusion import DenseBlock
from .keys import KeyArtifact, NULL_FINGERPRINT

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingConfig:
    num_blocks: int = DEFAULT_COUPLING_BLOCKS
    alpha_scale: float = DEFAULT_ALPHA_SCALE
    growth: int = DENSE_GROWTH
    layers: int = DENSE_LAYERS
    use_attention: bool = True

    def __post_init__(self):
        if not MIN_COUPLING_BLOCKS <= self.num_blocks <= MAX_COUPLING_BLOCKS:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'num_blocks must be in [{MIN_COUPLING_BLOCKS}, {MAX_COUPLING_BLOCKS}]'))
        if not 0 < self.alpha_scale <= MAX_ALPHA_SCALE:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'alpha_scale must be in (0, {MAX_ALPHA_SCALE}]'))

    def to_dict(self):
        return asdict(self)


class ChannelGate(nn.Module):
    """Squeeze-excitation channel attention (delta), range-mapped to [DELTA_MIN, DELTA_MAX]."""

    def __init__(self, channels, reduction=SE_REDUCTION):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.avg_pool = nn.AdaptiveAvgPool2d(1)
        self.excitation = nn.Sequential(
            nn.Conv2d(channels, hidden, kernel_size=1),
            nn.ReLU(),
            nn.Conv2d(hidden, channels, kernel_size=1),
        )

    def forward(self, x):
        gate = torch.sigmoid(self.excitation(self.avg_pool(x)))
        return (DELTA_MIN + (DELTA_MAX - DELTA_MIN) * gate).expand_as(x)


class SpatialGate(nn.Module):
    """Spatial attention (eta) from channel mean/max statistics; not range-limited."""

    def __init__(self, kernel_size=SPATIAL_KERNEL):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size=kernel_size, padding=kernel_size // 2)

    def forward(self, x):
        stats = torch.cat((x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)), dim=1)
        return self.conv(stats).expand_as(x)


class UnitMap(nn.Module):
    """Constant 1; stands in for delta/eta in the attention-free coupling variant."""

    def forward(self, x):
        return torch.ones_like(x)


def _check_pair(left, right):
    if left.shape != right.shape:
        raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
            left=tuple(left.shape), right=tuple(right.shape)))


def _check_finite(name, *tensors):
    if not all(torch.isfinite(t).all() for t in tensors):
        raise NumericError(ErrorMessages.NON_FINITE.format(name=name))


class CouplingBlock(nn.Module):
    def __init__(self, channels, config=CouplingConfig()):
        super().__init__()
        self.alpha_scale = config.alpha_scale
        self.phi_add = DenseBlock(channels, channels, config.growth, config.layers)
        self.phi_mul = DenseBlock(channels, channels, config.growth, config.layers)
        self.mu = DenseBlock(channels, channels, config.growth, config.layers)
        if config.use_attention:
            self.delta = ChannelGate(channels)
            self.eta = SpatialGate()
        else:
            self.delta = UnitMap()
            self.eta = UnitMap()

    def alpha(self, x):
        return self.alpha_scale * torch.sigmoid(x)

    def log_scale(self, f):
        """Elementwise log of delta(f) * exp(alpha(eta(f) * phi(f)))."""
        return torch.log(self.delta(f)) + self.alpha(self.eta(f) * self.phi_mul(f))

    def forward(self, f_f, f_w):
        _check_pair(f_f, f_w)
        _check_finite('coupling input', f_f, f_w)
        f_next = f_f + self.phi_add(f_w)
        w_next = f_w * torch.exp(self.log_scale(f_next)) + self.mu(f_next)
        return f_next, w_next

    def inverse(self, f_c, f_k):
        _check_pair(f_c, f_k)
        _check_finite('coupling input', f_c, f_k)
        f_w = (f_k - self.mu(f_c)) * torch.exp(-self.log_scale(f_c))
        f_f = f_c - self.phi_add(f_w)
        return f_f, f_w

    def log_det(self, f_f, f_w):
        """Log-determinant of the forward Jacobian, one value per batch item."""
        f_next = f_f + self.phi_add(f_w)
        return self.log_scale(f_next).flatten(1).sum(dim=1)


def forward_block(f_f, f_w, blk):
    return blk(f_f, f_w)


def inverse_block(f_c, f_k, blk):
    return blk.inverse(f_c, f_k)


def protect(f_fused, f_wm, blocks, fingerprint=NULL_FINGERPRINT):
    """Thread both streams through every block; the final watermark stream is the key."""
    if len(blocks) == 0:
        raise ConfigurationError(ErrorMessages.EMPTY_BLOCKS)
    f, w = f_fused, f_wm
    for blk in blocks:
        f, w = forward_block(f, w, blk)
    return f, KeyArtifact(payload=w, fingerprint=fingerprint)


def recover(protected, key, blocks, fingerprint=None):
    """Run the blocks' inverses in reverse order. Raises KeyIncompatibleError on mismatch."""
    if len(blocks) == 0:
        raise ConfigurationError(ErrorMessages.EMPTY_BLOCKS)
    key.check_compatible(fingerprint=fingerprint, shape=tuple(protected.shape))
    f, w = protected, key.payload.to(device=protected.device, dtype=protected.dtype)
    for blk in reversed(blocks):
        f, w = inverse_block(f, w, blk)
    return f, w


class CouplingStack(nn.Module):
    def __init__(self, channels, config=CouplingConfig()):
        super().__init__()
        self.config = config
        self.blocks = nn.ModuleList(CouplingBlock(channels, config) for _ in range(config.num_blocks))

    def protect(self, f_fused, f_wm, fingerprint=NULL_FINGERPRINT):
        return protect(f_fused, f_wm, self.blocks, fingerprint)

    def recover(self, protected, key, fingerprint=None):
        return recover(protected, key, self.blocks, fingerprint)

    def log_det(self, f_fused, f_wm):
        total = torch.zeros(f_fused.shape[0], dtype=f_fused.dtype, device=f_fused.device)
        f, w = f_fused, f_wm
        for blk in self.blocks:
            total = total + blk.log_det(f, w)
            f, w = blk(f, w)
        return total
