"""
Dense blocks and the base/detail fusion module.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import DecomposedFeatures, init_weights
from .constants import DENSE_GROWTH, DENSE_LAYERS, DENSE_KERNEL, LEAKY_SLOPE, ErrorMessages
from .exceptions import ConfigurationError


class DenseBlock(nn.Module):
    """
    Densely connected 3x3 convolutions; layer i sees the input concatenated
    with every earlier layer output. A 1x1 projection maps the full
    concatenation to ``out_channels``.
    """

    def __init__(self, in_channels, out_channels, growth=DENSE_GROWTH, layers=DENSE_LAYERS):
        super().__init__()
        for name, value in (('growth', growth), ('layers', layers),
                            ('in_channels', in_channels), ('out_channels', out_channels)):
            if value <= 0:
                raise ConfigurationError(ErrorMessages.BAD_COUNT.format(name=name, value=value))
        self.convs = nn.ModuleList(
            nn.Conv2d(in_channels + i * growth, growth, DENSE_KERNEL, padding=DENSE_KERNEL // 2)
            for i in range(layers)
        )
        self.project = nn.Conv2d(in_channels + layers * growth, out_channels, kernel_size=1)
        self.apply(init_weights)

    def forward(self, x):
        features = [x]
        for conv in self.convs:
            features.append(F.leaky_relu(conv(torch.cat(features, dim=1)), LEAKY_SLOPE))
        return self.project(torch.cat(features, dim=1))

    def zero_(self):
        for p in self.parameters():
            nn.init.zeros_(p)
        return self


class FusionModule(nn.Module):
    """
    base:   mu(cat(base_a, base_b))
    detail: varphi(cat(detail_a, detail_b)) gated by sigmoid(phi(cat(detail_a, detail_b)))
    output: (base_a + base_b) / 2 + base + detail
    """

    def __init__(self, feat_dim, growth=DENSE_GROWTH, layers=DENSE_LAYERS):
        super().__init__()
        self.mu = DenseBlock(2 * feat_dim, feat_dim, growth, layers)
        self.varphi = DenseBlock(2 * feat_dim, feat_dim, growth, layers)
        self.phi = DenseBlock(2 * feat_dim, feat_dim, growth, layers)

    def forward(self, d: DecomposedFeatures):
        skip = (d.base_a + d.base_b) / 2
        base = self.mu(torch.cat((d.base_a, d.base_b), dim=1))
        details = torch.cat((d.detail_a, d.detail_b), dim=1)
        detail = self.varphi(details) * torch.sigmoid(self.phi(details))
        return skip + base + detail
