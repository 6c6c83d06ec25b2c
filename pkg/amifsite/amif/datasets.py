"""
Image I/O, paired dataset ingestion, augmentation, synthetic fixtures and the
watermark label.

A dataset root holds ``modal_a/<stem>.png`` and ``modal_b/<stem>.png`` plus
``splits/<split>.txt`` (one stem per line). Pairs match by filename stem.
"""
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset
from PIL import Image, ImageDraw, ImageFilter, ImageFont
from scipy import ndimage

from .constants import (
    SPLITS, MODALITY_A_DIR, MODALITY_B_DIR, SPLITS_DIR, WATERMARK_LABEL_FILE,
    IMAGE_EXTENSIONS, LABEL_FRACTION_RANGE, LABEL_CANVAS, WATERMARK_TEXT, DEFAULT_IMAGE_SIZE,
    ErrorMessages,
)
from .exceptions import ConfigurationError, InputValidationError
from .keys import atomic_write_bytes

logger = logging.getLogger(__name__)


@dataclass
class ImagePair:
    pair_id: str
    a: np.ndarray
    b: np.ndarray
    chroma: np.ndarray = None

    def tensors(self):
        return (torch.from_numpy(self.a).unsqueeze(0), torch.from_numpy(self.b).unsqueeze(0))


@dataclass
class DatasetSpec:
    root: Path
    splits: dict = field(default_factory=dict)
    size: int = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        self.root = Path(self.root)
        seen = {}
        for split, stems in self.splits.items():
            for stem in stems:
                if stem in seen and seen[stem] != split:
                    raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
                        reason=f"pair '{stem}' is in both '{seen[stem]}' and '{split}'"))
                seen[stem] = split

    @classmethod
    def from_root(cls, root, size=DEFAULT_IMAGE_SIZE):
        root = Path(root)
        if not root.is_dir():
            raise ConfigurationError(ErrorMessages.MISSING_PATH.format(path=root))
        splits = {}
        for split in SPLITS:
            listing = root / SPLITS_DIR / f'{split}.txt'
            if listing.exists():
                splits[split] = [line.strip() for line in listing.read_text().splitlines() if line.strip()]
        return cls(root=root, splits=splits, size=size)

    @property
    def label_path(self):
        return self.root / WATERMARK_LABEL_FILE

    def folder(self, modality):
        return self.root / (MODALITY_A_DIR if modality == 'a' else MODALITY_B_DIR)


# --------------------------------------------------------------------------
# Image I/O
# --------------------------------------------------------------------------

def load_image(path, size=None):
    """
    Read a PNG as float32 luma in [0, 1], resized (bilinear) to ``size``.
    Returns (luma, chroma) where chroma is (H, W, 2) CbCr for colour inputs, else None.
    """
    path = Path(path)
    if not path.exists():
        raise InputValidationError(ErrorMessages.MISSING_PATH.format(path=path))
    with Image.open(path) as img:
        img.load()
        if size is not None and img.size != (size, size):
            img = img.resize((size, size), Image.BILINEAR)
        if img.mode in ('L', 'I', 'I;16', '1', 'LA'):
            luma, chroma = img.convert('L'), None
        else:
            ycbcr = np.asarray(img.convert('RGB').convert('YCbCr'), dtype=np.float32) / 255.0
            rgb = np.asarray(img.convert('RGB'))
            if np.array_equal(rgb[..., 0], rgb[..., 1]) and np.array_equal(rgb[..., 1], rgb[..., 2]):
                return np.ascontiguousarray(ycbcr[..., 0]), None
            return np.ascontiguousarray(ycbcr[..., 0]), np.ascontiguousarray(ycbcr[..., 1:])
    return np.asarray(luma, dtype=np.float32) / 255.0, chroma


def to_pil(luma, chroma=None):
    y = np.clip(np.round(np.asarray(luma) * 255.0), 0, 255).astype(np.uint8)
    if chroma is None:
        return Image.fromarray(y, mode='L')
    cbcr = np.clip(np.round(np.asarray(chroma) * 255.0), 0, 255).astype(np.uint8)
    return Image.fromarray(np.dstack((y, cbcr)), mode='YCbCr').convert('RGB')


def save_image(path, luma, chroma=None):
    """Write luma (and optional CbCr chroma) as an 8-bit PNG, via write-then-rename."""
    buffer = io.BytesIO()
    to_pil(luma, chroma).save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())
    return Path(path)


def image_dimensions(path):
    path = Path(path)
    if not path.exists():
        raise InputValidationError(ErrorMessages.MISSING_PATH.format(path=path))
    with Image.open(path) as img:
        return img.size


# --------------------------------------------------------------------------
# Pairing
# --------------------------------------------------------------------------

def _stems(folder):
    if not folder.is_dir():
        raise ConfigurationError(ErrorMessages.MISSING_PATH.format(path=folder))
    return {p.stem for p in folder.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS}


def scan_pairs(spec, split):
    """Returns (paired stems, skipped messages) for one split."""
    stems_a, stems_b = _stems(spec.folder('a')), _stems(spec.folder('b'))
    wanted = spec.splits.get(split)
    if wanted is None:
        wanted = sorted(stems_a | stems_b)
    paired, skipped = [], []
    for stem in wanted:
        if stem not in stems_a:
            skipped.append(ErrorMessages.UNPAIRED_FILE.format(name=stem, folder=spec.folder('a')))
        elif stem not in stems_b:
            skipped.append(ErrorMessages.UNPAIRED_FILE.format(name=stem, folder=spec.folder('b')))
        else:
            paired.append(stem)
    for message in skipped:
        logger.warning(message)
    return paired, skipped


def load_pairs(spec, split, seed=None):
    """Load one split; sorted order, shuffled reproducibly when ``seed`` is given."""
    stems, _ = scan_pairs(spec, split)
    if not stems:
        raise ConfigurationError(ErrorMessages.EMPTY_SPLIT.format(split=split))
    stems = sorted(stems)
    if seed is not None:
        stems = [stems[i] for i in np.random.default_rng(seed).permutation(len(stems))]
    pairs = []
    for stem in stems:
        a, _ = load_image(spec.folder('a') / f'{stem}.png', spec.size)
        b, chroma = load_image(spec.folder('b') / f'{stem}.png', spec.size)
        pairs.append(ImagePair(pair_id=stem, a=a, b=b, chroma=chroma))
    logger.info("Loaded %d pairs from split '%s' of %s", len(pairs), split, spec.root)
    return pairs


# --------------------------------------------------------------------------
# Augmentation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationParams:
    quarter_turns: int = 0
    angle: float = 0.0


def rotate(image, params):
    out = np.rot90(image, k=params.quarter_turns)
    if params.angle:
        out = ndimage.rotate(out, params.angle, reshape=False, order=1, mode='reflect')
    return np.ascontiguousarray(out, dtype=np.float32)


def augment(pair, rng, max_angle=0.0):
    """
    Rotate both modalities by the same random multiple of 90 degrees, plus an
    optional small angle in [-max_angle, max_angle]. Returns (pair, params).
    """
    params = RotationParams(
        quarter_turns=int(rng.integers(4)),
        angle=float(rng.uniform(-max_angle, max_angle)) if max_angle > 0 else 0.0,
    )
    chroma = pair.chroma
    if chroma is not None:
        chroma = np.stack([rotate(chroma[..., i], params) for i in range(chroma.shape[-1])], axis=-1)
    rotated = ImagePair(pair.pair_id, rotate(pair.a, params), rotate(pair.b, params), chroma)
    return rotated, params


class PairDataset(Dataset):
    """
    Loaded pairs as ``(a, b)`` tensors of shape (1, H, W).

    Item ``i`` of epoch ``e`` is augmented with its own generator seeded by
    (seed, e, i), so a batch depends only on its position in the run and not
    on what was loaded before it.
    """

    def __init__(self, pairs, seed=0, max_angle=0.0):
        self.pairs = list(pairs)
        self.seed = seed
        self.max_angle = max_angle
        self.epoch = 0

    def set_epoch(self, epoch):
        self.epoch = epoch

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, index):
        rng = np.random.default_rng((self.seed, self.epoch, index))
        pair, _ = augment(self.pairs[index], rng, self.max_angle)
        return pair.tensors()


# --------------------------------------------------------------------------
# Synthetic fixture and watermark label
# --------------------------------------------------------------------------

def _synthetic_pair(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    cy, cx = 0.5 + rng.uniform(-0.05, 0.05, 2)
    ry, rx = rng.uniform(0.30, 0.42, 2)
    head = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0

    blobs = np.zeros((size, size))
    for _ in range(6):
        by, bx = cy + rng.uniform(-0.6, 0.6) * ry, cx + rng.uniform(-0.6, 0.6) * rx
        blobs += rng.uniform(0.2, 0.5) * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * rng.uniform(0.03, 0.08) ** 2))
    edges = ndimage.binary_dilation(head ^ ndimage.binary_erosion(head, iterations=2))
    mri = 0.25 * head + 0.5 * blobs * head + 0.3 * edges
    mri = ndimage.gaussian_filter(mri, 0.8)

    spots = np.zeros((size, size))
    for _ in range(3):
        sy, sx = cy + rng.uniform(-0.5, 0.5) * ry, cx + rng.uniform(-0.5, 0.5) * rx
        spots[int(np.clip(sy * size, 0, size - 1)), int(np.clip(sx * size, 0, size - 1))] = 1.0
    hot = ndimage.gaussian_filter(spots, size / 16)
    hot = hot / hot.max() if hot.max() > 0 else hot
    functional = 0.15 * head + 0.7 * hot * head + 0.15 * edges
    functional = ndimage.gaussian_filter(functional, 1.5)
    return np.clip(mri, 0, 1), np.clip(functional, 0, 1)


def _render_label(text, canvas):
    img = Image.new('L', (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
    draw.text(((canvas - (right - left)) // 2 - left, (canvas - (bottom - top)) // 2 - top),
              text, font=font, fill=255)
    draw.rectangle((4, 4, canvas - 5, canvas - 5), outline=255)
    img = img.point(lambda v: 255 if v >= 128 else 0)
    for _ in range(4):
        if np.mean(np.asarray(img) > 0) >= LABEL_FRACTION_RANGE[0]:
            break
        img = img.filter(ImageFilter.MaxFilter(3))
    return img


def _best_covered(coverage, fraction):
    """Keep the ``fraction`` best-covered pixels so a downsampled label keeps its area."""
    low, high = LABEL_FRACTION_RANGE
    n = coverage.size
    count = int(np.clip(round(fraction * n), np.ceil(low * n), np.floor(high * n)))
    mask = np.zeros(n, dtype=bool)
    mask[np.argsort(-coverage, axis=None, kind='stable')[:count]] = True
    return mask.reshape(coverage.shape)


def make_watermark_label(size=DEFAULT_IMAGE_SIZE, text=WATERMARK_TEXT):
    """Binary text-in-frame bitmap, float32 {0, 1}, positive fraction kept in LABEL_FRACTION_RANGE."""
    canvas = LABEL_CANVAS
    img = _render_label(text, canvas)
    if size >= canvas:
        mask = np.asarray(img.resize((size, size), Image.NEAREST)) > 0
    else:
        coverage = np.asarray(img.resize((size, size), Image.BOX), dtype=np.float64)
        mask = _best_covered(coverage, np.mean(np.asarray(img) > 0))
    mask = mask.astype(np.float32)
    low, high = LABEL_FRACTION_RANGE
    if not low <= mask.mean() <= high:
        raise ConfigurationError(ErrorMessages.CONFIG_INVALID.format(
            reason=f'watermark label fraction {mask.mean():.3f} outside [{low}, {high}]'))
    return mask


def load_label(path, size=None):
    luma, _ = load_image(path, size)
    return (luma >= 0.5).astype(np.float32)


def make_synthetic_fixture(root, n_pairs, size=DEFAULT_IMAGE_SIZE, seed=0):
    """
    Write ``n_pairs`` registered pseudo-MRI / pseudo-functional pairs per split,
    the split listings and the watermark label under ``root``.
    """
    if n_pairs < 1:
        raise ConfigurationError(ErrorMessages.BAD_COUNT.format(name='n_pairs', value=n_pairs))
    root = Path(root)
    rng = np.random.default_rng(seed)
    splits = {}
    for split in SPLITS:
        stems = [f'{split}_{i:04d}' for i in range(n_pairs)]
        for stem in stems:
            mri, functional = _synthetic_pair(rng, size)
            save_image(root / MODALITY_A_DIR / f'{stem}.png', mri)
            save_image(root / MODALITY_B_DIR / f'{stem}.png', functional)
        listing = root / SPLITS_DIR / f'{split}.txt'
        listing.parent.mkdir(parents=True, exist_ok=True)
        listing.write_text('\n'.join(stems) + '\n')
        splits[split] = stems
    save_image(root / WATERMARK_LABEL_FILE, make_watermark_label(size))
    logger.info("Synthetic fixture: %d pairs per split, %dx%d, seed %d -> %s", n_pairs, size, size, seed, root)
    return DatasetSpec(root=root, splits=splits, size=size)
