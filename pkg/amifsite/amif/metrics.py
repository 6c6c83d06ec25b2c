"""
Fused-image quality metrics: SF, MI, VIF, Qabf and SSIM.

Inputs are 2-D arrays in [0, 1]. SF, MI, VIF and Qabf work on 8-bit-scaled
intensities; SSIM uses a dynamic range of 1.0.
"""
import logging
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import convolve
from scipy.signal import convolve2d
from skimage.metrics import structural_similarity
from sklearn.metrics import mutual_info_score

from .constants import (
    VIF_SCALES, VIF_NOISE_VARIANCE,
    QABF_GAMMA_G, QABF_KAPPA_G, QABF_SIGMA_G, QABF_GAMMA_A, QABF_KAPPA_A, QABF_SIGMA_A,
    SSIM_K1, SSIM_K2, SSIM_SIGMA, METRIC_FIELDS, ErrorMessages,
)
from .exceptions import DimensionError

logger = logging.getLogger(__name__)

_EPS = 1e-10


@dataclass
class MetricReport:
    sf: float
    mi: float
    vif: float
    qabf: float
    ssim: float

    def as_row(self):
        return [getattr(self, name) for name in METRIC_FIELDS]

    def to_dict(self):
        return asdict(self)


def _as_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(left='(H, W)', right=img.shape))
    return img


def _check_triplet(fused, src_a, src_b):
    fused, src_a, src_b = (_as_image(x) for x in (fused, src_a, src_b))
    if not fused.shape == src_a.shape == src_b.shape:
        raise DimensionError(ErrorMessages.SHAPE_MISMATCH.format(left=fused.shape, right=(src_a.shape, src_b.shape)))
    return fused, src_a, src_b


def to_uint8(img):
    return np.clip(np.round(_as_image(img) * 255.0), 0, 255).astype(np.uint8)


def spatial_frequency(img):
    img = _as_image(img) * 255.0
    rf = np.mean((img[:, 1:] - img[:, :-1]) ** 2)
    cf = np.mean((img[1:, :] - img[:-1, :]) ** 2)
    return float(np.sqrt(rf + cf))


def mutual_information_pair(x, y):
    """MI in bits between the 8-bit gray levels of two images."""
    return max(0.0, float(mutual_info_score(to_uint8(x).ravel(), to_uint8(y).ravel())) / math.log(2))


def mutual_information(fused, src_a, src_b):
    fused, src_a, src_b = _check_triplet(fused, src_a, src_b)
    return mutual_information_pair(fused, src_a) + mutual_information_pair(fused, src_b)


def _gaussian_window(size):
    sd = size / 5.0
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half:half + 1, -half:half + 1]
    h = np.exp(-(x * x + y * y) / (2.0 * sd * sd))
    h[h < np.finfo(h.dtype).eps * h.max()] = 0
    return h / h.sum()


def vif_pair(ref, dist):
    """Pixel-domain multi-scale VIF of ``dist`` against ``ref`` (8-bit scale)."""
    ref = _as_image(ref) * 255.0
    dist = _as_image(dist) * 255.0
    num = den = 0.0
    for scale in range(1, VIF_SCALES + 1):
        win = np.rot90(_gaussian_window(2 ** (VIF_SCALES - scale + 1) + 1), 2)
        if scale > 1:
            ref = convolve2d(ref, win, mode='valid')[::2, ::2]
            dist = convolve2d(dist, win, mode='valid')[::2, ::2]
        if min(ref.shape) < win.shape[0]:
            logger.debug("VIF stops at scale %d: image %s smaller than window", scale, ref.shape)
            break
        mu1 = convolve2d(ref, win, mode='valid')
        mu2 = convolve2d(dist, win, mode='valid')
        sigma1_sq = np.maximum(convolve2d(ref * ref, win, mode='valid') - mu1 * mu1, 0)
        sigma2_sq = np.maximum(convolve2d(dist * dist, win, mode='valid') - mu2 * mu2, 0)
        sigma12 = convolve2d(ref * dist, win, mode='valid') - mu1 * mu2

        g = sigma12 / (sigma1_sq + _EPS)
        sv_sq = sigma2_sq - g * sigma12
        flat_ref = sigma1_sq < _EPS
        g[flat_ref] = 0
        sv_sq[flat_ref] = sigma2_sq[flat_ref]
        sigma1_sq[flat_ref] = 0
        flat_dist = sigma2_sq < _EPS
        g[flat_dist] = 0
        sv_sq[flat_dist] = 0
        negative = g < 0
        sv_sq[negative] = sigma2_sq[negative]
        g[negative] = 0
        sv_sq = np.maximum(sv_sq, _EPS)

        num += np.sum(np.log10(1 + g * g * sigma1_sq / (sv_sq + VIF_NOISE_VARIANCE)))
        den += np.sum(np.log10(1 + sigma1_sq / VIF_NOISE_VARIANCE))
    if den == 0:
        # reference carries no information; identical images still score 1
        return 1.0 if np.array_equal(ref, dist) else 0.0
    return float(num / den)


def vif_fusion(fused, src_a, src_b):
    fused, src_a, src_b = _check_triplet(fused, src_a, src_b)
    return (vif_pair(src_a, fused) + vif_pair(src_b, fused)) / 2


def _edge_map(img):
    sobel_x = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
    gx = convolve(img, sobel_x, mode='reflect')
    gy = convolve(img, sobel_x.T, mode='reflect')
    strength = np.sqrt(gx * gx + gy * gy)
    orientation = np.full_like(img, math.pi / 2)
    nonzero = gx != 0
    orientation[nonzero] = np.arctan(gy[nonzero] / gx[nonzero])
    return strength, orientation


def _qg(x):
    return QABF_GAMMA_G / (1 + np.exp(QABF_KAPPA_G * (x - QABF_SIGMA_G)))


def _qa(x):
    return QABF_GAMMA_A / (1 + np.exp(QABF_KAPPA_A * (x - QABF_SIGMA_A)))


def _edge_transfer(g_src, a_src, g_fused, a_fused):
    high = np.maximum(g_src, g_fused)
    ratio = np.where(high > 0, np.minimum(g_src, g_fused) / np.where(high > 0, high, 1), 1.0)
    orientation = 1 - np.abs(a_src - a_fused) / (math.pi / 2)
    return _qg(ratio) * _qa(orientation) / (_qg(1.0) * _qa(1.0))


def qabf(fused, src_a, src_b):
    """Edge-strength-weighted edge transfer, normalized so perfect transfer scores 1."""
    fused, src_a, src_b = (x * 255.0 for x in _check_triplet(fused, src_a, src_b))
    g_a, a_a = _edge_map(src_a)
    g_b, a_b = _edge_map(src_b)
    g_f, a_f = _edge_map(fused)
    weight = np.sum(g_a + g_b)
    if weight == 0:
        return 0.0
    q = _edge_transfer(g_a, a_a, g_f, a_f) * g_a + _edge_transfer(g_b, a_b, g_f, a_f) * g_b
    return float(np.clip(np.sum(q) / weight, 0.0, 1.0))


def ssim_pair(x, y):
    return float(structural_similarity(
        _as_image(x), _as_image(y), data_range=1.0, gaussian_weights=True, sigma=SSIM_SIGMA,
        use_sample_covariance=False, K1=SSIM_K1, K2=SSIM_K2))


def ssim_fusion(fused, src_a, src_b):
    fused, src_a, src_b = _check_triplet(fused, src_a, src_b)
    return (ssim_pair(fused, src_a) + ssim_pair(fused, src_b)) / 2


def evaluate(fused, src_a, src_b):
    return MetricReport(
        sf=spatial_frequency(fused),
        mi=mutual_information(fused, src_a, src_b),
        vif=vif_fusion(fused, src_a, src_b),
        qabf=qabf(fused, src_a, src_b),
        ssim=ssim_fusion(fused, src_a, src_b),
    )


def aggregate(reports):
    """Field-wise mean over a non-empty sequence of reports."""
    reports = list(reports)
    return MetricReport(**{name: float(np.mean([getattr(r, name) for r in reports]))
                           for name in METRIC_FIELDS})


def psnr(x, y):
    """PSNR in dB for [0, 1] images; infinite for identical inputs."""
    mse = float(np.mean((_as_image(x) - _as_image(y)) ** 2))
    return float('inf') if mse == 0 else float(10 * np.log10(1.0 / mse))
