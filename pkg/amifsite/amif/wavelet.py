"""
Single-level orthonormal Haar analysis/synthesis on (B, C, H, W) tensors.

For a 2x2 block [[a, b], [c, d]]:
    ll = (a + b + c + d) / 2     lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2     hh = (a - b - c + d) / 2
so lh carries column differences and hl row differences. The packed view
interleaves bands per source channel: packed[:, 4*c + k] is band k of channel c,
k in (ll, lh, hl, hh).
"""
from dataclasses import dataclass

import torch
from einops import rearrange

from .constants import ErrorMessages
from .exceptions import DimensionError

BAND_NAMES = ('ll', 'lh', 'hl', 'hh')


@dataclass(frozen=True)
class Subbands:
    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor

    def bands(self):
        return (self.ll, self.lh, self.hl, self.hh)

    def pack(self):
        """Channel-packed view (B, 4C, H/2, W/2)."""
        return rearrange(torch.stack(self.bands(), dim=2), 'b c k h w -> b (c k) h w')

    @classmethod
    def unpack(cls, packed):
        if packed.dim() != 4 or packed.shape[1] % 4:
            raise DimensionError(ErrorMessages.WRONG_CHANNELS.format(
                expected='a multiple of 4', actual=tuple(packed.shape)))
        stacked = rearrange(packed, 'b (c k) h w -> b c k h w', k=4)
        return cls(*stacked.unbind(dim=2))


def _check_even(x):
    if x.dim() != 4:
        raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(
            left='(B, C, H, W)', right=tuple(x.shape)))
    for axis, size in (('height', x.shape[-2]), ('width', x.shape[-1])):
        if size % 2:
            raise DimensionError(ErrorMessages.ODD_DIMENSION.format(axis=axis, size=size))


def dwt2(x):
    _check_even(x)
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return Subbands(
        ll=(a + b + c + d) / 2,
        lh=(a - b + c - d) / 2,
        hl=(a + b - c - d) / 2,
        hh=(a - b - c + d) / 2,
    )


def idwt2(s):
    shapes = {tuple(band.shape) for band in s.bands()}
    if len(shapes) != 1:
        raise DimensionError(ErrorMessages.BAND_MISMATCH.format(shapes=sorted(shapes)))
    ll, lh, hl, hh = s.bands()
    a = (ll + lh + hl + hh) / 2
    b = (ll - lh + hl - hh) / 2
    c = (ll + lh - hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    # (b, c, h, w) per corner -> interleave back onto the full grid
    top = torch.stack((a, b), dim=-1)
    bottom = torch.stack((c, d), dim=-1)
    return rearrange(torch.stack((top, bottom), dim=-3), 'b c h i w j -> b c (h i) (w j)')


def dwt2_packed(x):
    return dwt2(x).pack()


def idwt2_packed(packed):
    return idwt2(Subbands.unpack(packed))


def low_band(packed):
    """LL band of a packed tensor, (B, C, H/2, W/2)."""
    return packed[:, 0::4]
