"""
Content-conditioned watermark memory.

The copyright identifier lives in learnable memory vectors. Two convolutional
stems read the source images; bidirectional cross attention couples memory and
image tokens, and the attended tokens are projected and spread back over the
pixel grid. No watermark payload is ever passed in.
"""
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .backbone import init_weights
from .constants import (
    MEMORY_SLOTS, STEM_CHANNELS, TOKEN_GRID, WATERMARK_HEADS, WATERMARK_SOURCES,
    INIT_STD, LEAKY_SLOPE, ErrorMessages,
)
from .exceptions import ConfigurationError, DimensionError


@dataclass(frozen=True)
class WatermarkConfig:
    memory_slots: int = MEMORY_SLOTS
    stem_channels: int = STEM_CHANNELS
    token_grid: int = TOKEN_GRID
    num_heads: int = WATERMARK_HEADS
    source: str = 'memory'

    def __post_init__(self):
        for name in ('memory_slots', 'stem_channels', 'token_grid', 'num_heads'):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigurationError(ErrorMessages.BAD_COUNT.format(name=name, value=value))
        if self.source not in WATERMARK_SOURCES:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'watermark source must be one of {WATERMARK_SOURCES}'))

    def to_dict(self):
        return asdict(self)


class CrossAttention(nn.Module):
    """Scaled dot-product attention of query tokens over key/value tokens."""

    def __init__(self, dim, num_heads=1):
        super().__init__()
        if dim % num_heads:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                reason=f'attention dim {dim} not divisible by {num_heads} heads'))
        self.num_heads = num_heads
        self.dp_scale = (dim // num_heads) ** -0.5
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)

    def forward(self, x_q, x_kv, return_weights=False):
        if x_q.shape[1] == 0 or x_kv.shape[1] == 0:
            raise ConfigurationError(ErrorMessages.EMPTY_TOKENS)
        q, k, v = (rearrange(t, 'b n (h c) -> b h n c', h=self.num_heads)
                   for t in (self.q_proj(x_q), self.k_proj(x_kv), self.v_proj(x_kv)))
        attn = ((q * self.dp_scale) @ k.transpose(-2, -1)).softmax(dim=-1)
        out = rearrange(attn @ v, 'b h n c -> b n (h c)')
        return (out, attn) if return_weights else out


class BidirectionalCrossAttention(nn.Module):
    def __init__(self, dim, num_heads=1):
        super().__init__()
        self.memory_to_context = CrossAttention(dim, num_heads)
        self.context_to_memory = CrossAttention(dim, num_heads)

    def forward(self, mem, ctx, return_weights=False):
        mem_out, mem_attn = self.memory_to_context(mem, ctx, return_weights=True)
        ctx_out, ctx_attn = self.context_to_memory(ctx, mem, return_weights=True)
        if return_weights:
            return mem_out, ctx_out, (mem_attn, ctx_attn)
        return mem_out, ctx_out


class ConvStem(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(1, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)

    def forward(self, x):
        return self.conv2(F.leaky_relu(self.conv1(x), LEAKY_SLOPE))


class WatermarkMemory(nn.Module):
    """
    Learnable memory vectors plus one stem per modality. Serialized only as
    part of the model checkpoint.
    """

    def __init__(self, feat_dim, config=WatermarkConfig()):
        super().__init__()
        self.config = config
        self.feat_dim = feat_dim
        self.vectors = nn.Parameter(torch.empty(config.memory_slots, feat_dim))
        self.conv_stem_a = ConvStem(config.stem_channels)
        self.conv_stem_b = ConvStem(config.stem_channels)
        self.token_proj = nn.Linear(config.stem_channels, feat_dim)
        self.attention = BidirectionalCrossAttention(feat_dim, config.num_heads)
        self.out_proj = nn.Linear(2 * feat_dim, feat_dim)
        if config.source == 'static':
            self.static_grid = nn.Parameter(torch.empty(config.token_grid ** 2, 2 * feat_dim))
        else:
            self.pos_embed = nn.Parameter(torch.empty(config.token_grid ** 2, feat_dim))
        self.apply(init_weights)
        nn.init.trunc_normal_(self.vectors, std=1.0)
        if config.source == 'static':
            nn.init.trunc_normal_(self.static_grid, std=INIT_STD)
        else:
            nn.init.trunc_normal_(self.pos_embed, std=1.0)

    def extract_stems(self, a, b):
        if a.shape != b.shape:
            raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
                left=tuple(a.shape), right=tuple(b.shape)))
        return self.conv_stem_a(a), self.conv_stem_b(b)

    def _pooled(self, table, grid):
        """A (token_grid ** 2, C) table averaged down to (grid ** 2, C)."""
        if grid == self.config.token_grid:
            return table
        table = rearrange(table, '(h w) c -> 1 c h w', h=self.config.token_grid)
        return rearrange(F.adaptive_avg_pool2d(table, grid), '1 c h w -> (h w) c')

    def tokens(self, stem):
        """Image tokens with their learnable grid positions added."""
        grid = min(self.config.token_grid, stem.shape[-2], stem.shape[-1])
        pooled = F.adaptive_avg_pool2d(stem, grid)
        tokens = self.token_proj(rearrange(pooled, 'b c h w -> b (h w) c'))
        return tokens + self._pooled(self.pos_embed, grid), grid

    def _branch(self, stem):
        tokens, grid = self.tokens(stem)
        memory = self.vectors.unsqueeze(0).expand(tokens.shape[0], -1, -1)
        mem_attended, ctx_attended = self.attention(memory, tokens)
        # spatial tokens carry memory values; attended memory adds a global term
        return ctx_attended + mem_attended.mean(dim=1, keepdim=True), grid

    def forward(self, a, b):
        height, width = a.shape[-2:]
        if self.config.source == 'static':
            grid = min(self.config.token_grid, height, width)
            tokens = self._pooled(self.static_grid, grid).unsqueeze(0).expand(a.shape[0], -1, -1)
        else:
            stem_a, stem_b = self.extract_stems(a, b)
            branch_a, grid = self._branch(stem_a)
            branch_b, _ = self._branch(stem_b)
            tokens = torch.cat((branch_a, branch_b), dim=-1)
        f_w = rearrange(self.out_proj(tokens), 'b (h w) c -> b c h w', h=grid, w=grid)
        return F.interpolate(f_w, size=(height, width), mode='nearest')