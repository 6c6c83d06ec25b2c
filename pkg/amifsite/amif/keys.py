"""
Key artifacts and the key-file codec.

Layout (little endian throughout):
    magic "AMIFKEY1" | version u16 | checkpoint fingerprint (16 bytes) |
    rank u8 | dims u32 * rank | dtype code u8 | payload | CRC32 u32

The CRC covers every byte before it. Integrity failures raise
AuthenticationError; intact keys that cannot be used with the current model
raise KeyIncompatibleError.
"""
import logging
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .constants import (
    KEY_MAGIC, KEY_FORMAT_VERSION, KEY_FINGERPRINT_BYTES, KEY_DTYPE_FLOAT32,
    ErrorMessages,
)
from .exceptions import AuthenticationError, KeyIncompatibleError

logger = logging.getLogger(__name__)

NULL_FINGERPRINT = bytes(KEY_FINGERPRINT_BYTES)

_HEAD = struct.Struct('<8sH16sB')
_CRC = struct.Struct('<I')


@dataclass(frozen=True)
class KeyArtifact:
    """The watermark-side output of the last coupling block, bound to one checkpoint."""
    payload: torch.Tensor
    fingerprint: bytes = NULL_FINGERPRINT
    version: int = KEY_FORMAT_VERSION

    @property
    def shape(self):
        return tuple(self.payload.shape)

    def check_compatible(self, fingerprint=None, shape=None):
        """
        Raise KeyIncompatibleError when the key was issued by another
        checkpoint or does not fit the protected tensor. ``None`` skips a check.
        """
        if self.version != KEY_FORMAT_VERSION:
            raise KeyIncompatibleError(ErrorMessages.KEY_VERSION.format(version=self.version))
        if fingerprint is not None and fingerprint != self.fingerprint:
            raise KeyIncompatibleError(ErrorMessages.KEY_FINGERPRINT.format(
                key_fp=self.fingerprint.hex(), model_fp=fingerprint.hex()))
        if shape is not None and tuple(shape) != self.shape:
            raise KeyIncompatibleError(ErrorMessages.KEY_SHAPE.format(
                key_shape=self.shape, expected_shape=tuple(shape)))

    def unbind(self):
        """One key per batch item, each keeping a leading batch axis of 1."""
        return [KeyArtifact(p.unsqueeze(0), self.fingerprint, self.version)
                for p in self.payload.unbind(0)]

    def to_bytes(self):
        array = self.payload.detach().cpu().numpy().astype('<f4')
        body = _HEAD.pack(KEY_MAGIC, self.version, self.fingerprint, array.ndim)
        body += struct.pack(f'<{array.ndim}I', *array.shape)
        body += struct.pack('<B', KEY_DTYPE_FLOAT32)
        body += array.tobytes()
        return body + _CRC.pack(zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEAD.size + 1 + _CRC.size:
            raise AuthenticationError(ErrorMessages.KEY_TRUNCATED)
        if data[:len(KEY_MAGIC)] != KEY_MAGIC:
            raise AuthenticationError(ErrorMessages.KEY_BAD_MAGIC)
        body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
        if zlib.crc32(body) != crc:
            raise AuthenticationError(ErrorMessages.KEY_CHECKSUM)

        _, version, fingerprint, rank = _HEAD.unpack_from(body)
        if version != KEY_FORMAT_VERSION:
            raise KeyIncompatibleError(ErrorMessages.KEY_VERSION.format(version=version))
        offset = _HEAD.size
        dims_end = offset + 4 * rank
        if len(body) < dims_end + 1:
            raise AuthenticationError(ErrorMessages.KEY_TRUNCATED)
        shape = struct.unpack_from(f'<{rank}I', body, offset)
        (dtype_code,) = struct.unpack_from('<B', body, dims_end)
        if dtype_code != KEY_DTYPE_FLOAT32:
            raise KeyIncompatibleError(ErrorMessages.KEY_DTYPE.format(code=dtype_code))

        raw = body[dims_end + 1:]
        if len(raw) != 4 * int(np.prod(shape, dtype=np.int64)):
            raise AuthenticationError(ErrorMessages.KEY_TRUNCATED)
        array = np.frombuffer(raw, dtype='<f4').reshape(shape).astype(np.float32)
        return cls(payload=torch.from_numpy(array), fingerprint=bytes(fingerprint), version=version)


def atomic_write_bytes(path, data):
    """Write to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_key(path, key):
    atomic_write_bytes(path, key.to_bytes())
    logger.debug("Wrote key %s shape=%s fingerprint=%s", path, key.shape, key.fingerprint.hex())


def read_key(path):
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise AuthenticationError(ErrorMessages.MISSING_PATH.format(path=path))
    return KeyArtifact.from_bytes(data)
