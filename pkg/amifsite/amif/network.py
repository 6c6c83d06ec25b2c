"""
The assembled fusion-and-protection network.
"""
from dataclasses import dataclass, field

import torch.nn as nn

from .backbone import EncoderConfig, SharedEncoder, PrivateEncoder, Decoder, DecomposedFeatures
from .ccwm import WatermarkConfig, WatermarkMemory
from .constants import ErrorMessages
from .csamic import CouplingConfig, CouplingStack
from .exceptions import ConfigurationError
from .fusion import FusionModule


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    watermark: WatermarkConfig = field(default_factory=WatermarkConfig)

    def to_dict(self):
        return {
            'encoder': self.encoder.to_dict(),
            'coupling': self.coupling.to_dict(),
            'watermark': self.watermark.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {'encoder', 'coupling', 'watermark'}
        if unknown:
            raise ConfigurationError(ErrorMessages.UNKNOWN_CONFIG_KEYS.format(keys=sorted(unknown)))
        try:
            return cls(
                encoder=EncoderConfig(**data.get('encoder', {})),
                coupling=CouplingConfig(**data.get('coupling', {})),
                watermark=WatermarkConfig(**data.get('watermark', {})),
            )
        except TypeError as exc:
            raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(reason=exc))


class AMIFNet(nn.Module):
    """
    Shared/private encoders, fusion, watermark memory, coupling stack and the
    shared decoder. The coupling stack runs on wavelet-packed features, so it
    has four times the encoder width.
    """

    def __init__(self, config=None):
        super().__init__()
        self.config = config or ModelConfig()
        enc = self.config.encoder
        self.shared_encoder = SharedEncoder(enc)
        self.private_a = PrivateEncoder(enc)
        self.private_b = PrivateEncoder(enc)
        self.decoder = Decoder(enc)
        self.fusion = FusionModule(enc.feat_dim)
        self.watermark = WatermarkMemory(enc.feat_dim, self.config.watermark)
        self.coupling = CouplingStack(4 * enc.feat_dim, self.config.coupling)
        self.watermark_head = nn.Conv2d(enc.feat_dim, 1, kernel_size=1)

    @property
    def feat_dim(self):
        return self.config.encoder.feat_dim

    @property
    def image_size(self):
        return self.config.encoder.image_size

    def shared_encode(self, x):
        return self.shared_encoder(x)

    def private_encode(self, x, modality):
        encoder = self.private_a if modality == 'a' else self.private_b
        return encoder(x)

    def decode(self, f):
        return self.decoder(f)

    def decompose(self, a, b):
        return DecomposedFeatures(
            base_a=self.shared_encode(a),
            base_b=self.shared_encode(b),
            detail_a=self.private_encode(a, 'a'),
            detail_b=self.private_encode(b, 'b'),
        )
