"""
Shared encoder/decoder and per-modality private encoders.

The shared encoder yields base features (cross-modal, low frequency); each
private encoder yields detail features from a long-short range transformer
branch plus an invertible additive-coupling detail branch. No block changes
spatial resolution.
"""
import numbers
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .constants import (
    DEFAULT_NUM_BLOCKS, DEFAULT_NUM_HEADS, DEFAULT_FEAT_DIM, DEFAULT_IMAGE_SIZE,
    DEFAULT_FFN_EXPANSION, DETAIL_COUPLING_NODES, INIT_STD, ErrorMessages,
)
from .exceptions import ConfigurationError, DimensionError


@dataclass(frozen=True)
class EncoderConfig:
    num_blocks: int = DEFAULT_NUM_BLOCKS
    num_heads: int = DEFAULT_NUM_HEADS
    feat_dim: int = DEFAULT_FEAT_DIM
    image_size: int = DEFAULT_IMAGE_SIZE
    ffn_expansion: float = DEFAULT_FFN_EXPANSION
    detail_nodes: int = DETAIL_COUPLING_NODES

    def __post_init__(self):
        for name in ('num_blocks', 'num_heads', 'feat_dim', 'image_size', 'detail_nodes'):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigurationError(ErrorMessages.BAD_COUNT.format(name=name, value=value))
        if self.feat_dim % self.num_heads:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'feat_dim {self.feat_dim} not divisible by num_heads {self.num_heads}'))
        if self.feat_dim % 2:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason='feat_dim must be even for the channel split'))
        if self.image_size % 2:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'image_size {self.image_size} must be even'))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DecomposedFeatures:
    base_a: torch.Tensor
    base_b: torch.Tensor
    detail_a: torch.Tensor
    detail_b: torch.Tensor

    def __post_init__(self):
        shapes = {tuple(t.shape) for t in (self.base_a, self.base_b, self.detail_a, self.detail_b)}
        if len(shapes) != 1:
            raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
                left='four equal feature maps', right=sorted(shapes)))


def init_weights(module):
    """Truncated normal for convs/linears; zero biases."""
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.trunc_normal_(module.weight, std=INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def zero_init(module):
    nn.init.zeros_(module.weight)
    if module.bias is not None:
        nn.init.zeros_(module.bias)
    return module


def check_image(x, image_size):
    if x.dim() != 4 or x.shape[1] != 1:
        raise DimensionError(ErrorMessages.WRONG_CHANNELS.format(
            expected=1, actual=tuple(x.shape)))
    height, width = x.shape[-2:]
    if height != image_size or width != image_size:
        raise DimensionError(ErrorMessages.WRONG_IMAGE_SIZE.format(
            expected=image_size, height=height, width=width))


class LayerNorm(nn.Module):
    """Per-pixel layer norm over channels, with bias."""

    def __init__(self, dim):
        super().__init__()
        if isinstance(dim, numbers.Integral):
            dim = (dim,)
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        h, w = x.shape[-2:]
        x = rearrange(x, 'b c h w -> b (h w) c')
        mu = x.mean(-1, keepdim=True)
        sigma = x.var(-1, keepdim=True, unbiased=False)
        x = (x - mu) / torch.sqrt(sigma + 1e-5) * self.weight + self.bias
        return rearrange(x, 'b (h w) c -> b c h w', h=h, w=w)


class FeedForward(nn.Module):
    """Gated depthwise-conv feed-forward."""

    def __init__(self, dim, expansion):
        super().__init__()
        hidden = int(dim * expansion)
        self.project_in = nn.Conv2d(dim, hidden * 2, kernel_size=1, bias=False)
        self.dwconv = nn.Conv2d(hidden * 2, hidden * 2, kernel_size=3, padding=1,
                                groups=hidden * 2, bias=False)
        self.project_out = nn.Conv2d(hidden, dim, kernel_size=1, bias=False)

    def forward(self, x):
        x1, x2 = self.dwconv(self.project_in(x)).chunk(2, dim=1)
        return self.project_out(F.gelu(x1) * x2)


class ChannelAttention(nn.Module):
    """Transposed (channel-wise) multi-head self-attention."""

    def __init__(self, dim, num_heads):
        super().__init__()
        self.num_heads = num_heads
        self.temperature = nn.Parameter(torch.ones(num_heads, 1, 1))
        self.qkv = nn.Conv2d(dim, dim * 3, kernel_size=1, bias=False)
        self.qkv_dwconv = nn.Conv2d(dim * 3, dim * 3, kernel_size=3, padding=1,
                                    groups=dim * 3, bias=False)
        self.project_out = nn.Conv2d(dim, dim, kernel_size=1, bias=False)

    def forward(self, x):
        h, w = x.shape[-2:]
        q, k, v = self.qkv_dwconv(self.qkv(x)).chunk(3, dim=1)
        q, k, v = (rearrange(t, 'b (head c) h w -> b head c (h w)', head=self.num_heads)
                   for t in (q, k, v))
        q = F.normalize(q, dim=-1)
        k = F.normalize(k, dim=-1)
        attn = ((q @ k.transpose(-2, -1)) * self.temperature).softmax(dim=-1)
        out = rearrange(attn @ v, 'b head c (h w) -> b (head c) h w',
                        head=self.num_heads, h=h, w=w)
        return self.project_out(out)


class TransformerBlock(nn.Module):
    def __init__(self, dim, num_heads, expansion):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = ChannelAttention(dim, num_heads)
        self.norm2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, expansion)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))

    def zero_residuals(self):
        zero_init(self.attn.project_out)
        zero_init(self.ffn.project_out)


class LongShortRangeBlock(nn.Module):
    """
    Half the channels go through global attention, the other half through a
    local depthwise-conv path; a gated feed-forward follows.
    """

    def __init__(self, dim, num_heads, expansion):
        super().__init__()
        half = dim // 2
        heads = max(1, min(num_heads, half))
        while half % heads:
            heads -= 1
        self.norm1 = LayerNorm(dim)
        self.global_branch = ChannelAttention(half, heads)
        self.local_branch = nn.Sequential(
            nn.Conv2d(half, half, kernel_size=3, padding=1, groups=half),
            nn.GELU(),
            nn.Conv2d(half, half, kernel_size=1),
        )
        self.merge = nn.Conv2d(dim, dim, kernel_size=1)
        self.norm2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, expansion)

    def forward(self, x):
        g, l = self.norm1(x).chunk(2, dim=1)
        x = x + self.merge(torch.cat((self.global_branch(g), self.local_branch(l)), dim=1))
        return x + self.ffn(self.norm2(x))

    def zero_residuals(self):
        zero_init(self.merge)
        zero_init(self.ffn.project_out)


class InvertedResidualBlock(nn.Module):
    def __init__(self, inp, oup, expand_ratio=2):
        super().__init__()
        hidden = int(inp * expand_ratio)
        self.body = nn.Sequential(
            nn.Conv2d(inp, hidden, 1, bias=False),
            nn.ReLU6(),
            nn.ReflectionPad2d(1),
            nn.Conv2d(hidden, hidden, 3, groups=hidden, bias=False),
            nn.ReLU6(),
            nn.Conv2d(hidden, oup, 1, bias=False),
        )

    def forward(self, x):
        return self.body(x)


class DetailNode(nn.Module):
    """Two additive coupling steps over a channel split: z2 += phi(z1); z1 += eta(z2)."""

    def __init__(self, half):
        super().__init__()
        self.theta_phi = InvertedResidualBlock(half, half)
        self.theta_eta = InvertedResidualBlock(half, half)

    def forward(self, z1, z2):
        z2 = z2 + self.theta_phi(z1)
        z1 = z1 + self.theta_eta(z2)
        return z1, z2

    def inverse(self, z1, z2):
        z1 = z1 - self.theta_eta(z2)
        z2 = z2 - self.theta_phi(z1)
        return z1, z2


class DetailBranch(nn.Module):
    def __init__(self, dim, num_nodes):
        super().__init__()
        self.nodes = nn.ModuleList(DetailNode(dim // 2) for _ in range(num_nodes))

    def forward(self, x):
        z1, z2 = x.chunk(2, dim=1)
        for node in self.nodes:
            z1, z2 = node(z1, z2)
        return torch.cat((z1, z2), dim=1)

    def inverse(self, y):
        z1, z2 = y.chunk(2, dim=1)
        for node in reversed(self.nodes):
            z1, z2 = node.inverse(z1, z2)
        return torch.cat((z1, z2), dim=1)


class SharedEncoder(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        self.patch_embed = nn.Conv2d(1, config.feat_dim, kernel_size=3, padding=1, bias=False)
        self.blocks = nn.Sequential(*[
            TransformerBlock(config.feat_dim, config.num_heads, config.ffn_expansion)
            for _ in range(config.num_blocks)
        ])
        self.apply(init_weights)
        for block in self.blocks:
            block.zero_residuals()

    def forward(self, x):
        check_image(x, self.config.image_size)
        return self.blocks(self.patch_embed(x))


class PrivateEncoder(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        self.patch_embed = nn.Conv2d(1, config.feat_dim, kernel_size=3, padding=1, bias=False)
        self.global_branch = nn.Sequential(*[
            LongShortRangeBlock(config.feat_dim, config.num_heads, config.ffn_expansion)
            for _ in range(config.num_blocks)
        ])
        self.detail_branch = DetailBranch(config.feat_dim, config.detail_nodes)
        self.apply(init_weights)
        for block in self.global_branch:
            block.zero_residuals()

    def forward(self, x):
        check_image(x, self.config.image_size)
        embedded = self.patch_embed(x)
        return self.global_branch(embedded) + self.detail_branch(embedded)


class Decoder(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        dim = config.feat_dim
        self.blocks = nn.Sequential(*[
            TransformerBlock(dim, config.num_heads, config.ffn_expansion)
            for _ in range(config.num_blocks)
        ])
        self.output = nn.Sequential(
            nn.Conv2d(dim, dim // 2, kernel_size=3, padding=1, bias=False),
            nn.LeakyReLU(),
            nn.Conv2d(dim // 2, 1, kernel_size=3, padding=1, bias=False),
        )
        self.apply(init_weights)
        for block in self.blocks:
            block.zero_residuals()

    def forward(self, f):
        if f.dim() != 4 or f.shape[1] != self.config.feat_dim:
            raise DimensionError(ErrorMessages.WRONG_CHANNELS.format(
                expected=self.config.feat_dim, actual=tuple(f.shape)))
        return torch.sigmoid(self.output(self.blocks(f)))


