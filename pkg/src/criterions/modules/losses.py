import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import cv2
import numpy as np
import torch
import torch.nn as nn

from src.geometry import DepthRaster, ImageRaster
from src.utils.errors import DimensionMismatchError, InvalidInputError

__all__ = [
    'LossWeights',
    'SSIM',
    'PhotometricError',
    'InfoNCELoss',
    'ssim',
    'photometric_error',
    'auto_mask',
    'min_photometric_loss',
    'consistency_pairs',
    'extra_photometric_loss',
    'depth_consistency_loss',
    'total_loss',
    'infonce_loss',
    'specular_mask',
    ]

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DESCRIPTOR_NORM_TOL = 1e-6


@dataclass(frozen=True)
class LossWeights:
    lambda_ph_extra: float = 0.1
    lambda_dc: float = 0.1
    tau: float = 0.01
    alpha_ssim: float = 0.85
    outlier_percentile: float = 80.0

    def __post_init__(self):
        if not (self.lambda_ph_extra > 0 and self.lambda_dc > 0 and self.tau > 0):
            raise InvalidInputError('loss weights and temperature must be positive')
        if not 0.0 <= self.alpha_ssim <= 1.0:
            raise InvalidInputError(f'alpha_ssim must lie in [0, 1], got {self.alpha_ssim}')
        if not 0.0 < self.outlier_percentile <= 100.0:
            raise InvalidInputError(f'outlier_percentile must lie in (0, 100], got {self.outlier_percentile}')


def _image_tensor(x):
    """ImageRaster / [H, W, 3] array -> [1, 3, H, W] double tensor."""
    values = x.values if isinstance(x, ImageRaster) else np.asarray(x, dtype=np.float64)
    if values.ndim == 2:
        values = values[..., None]
    return torch.as_tensor(values, dtype=torch.float64).permute(2, 0, 1)[None]


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionMismatchError(f'raster shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}')


class SSIM(nn.Module):
    """Per-pixel SSIM over a window x window mean/variance box with reflection padding."""
    def __init__(self, window=3):
        super().__init__()
        self.mu_pool = nn.AvgPool2d(window, 1)
        self.pad = nn.ReflectionPad2d(window // 2)

    def forward(self, a, b):
        """
        a, b: Tensor [N, C, H, W]
        return: Tensor [N, C, H, W] in [-1, 1]
        """
        a = self.pad(a)
        b = self.pad(b)
        mu_a = self.mu_pool(a)
        mu_b = self.mu_pool(b)
        sigma_a = self.mu_pool(a * a) - mu_a ** 2
        sigma_b = self.mu_pool(b * b) - mu_b ** 2
        sigma_ab = self.mu_pool(a * b) - mu_a * mu_b
        numerator = (2 * mu_a * mu_b + SSIM_C1) * (2 * sigma_ab + SSIM_C2)
        denominator = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (sigma_a + sigma_b + SSIM_C2)
        return numerator / denominator


class PhotometricError(nn.Module):
    def __init__(self, alpha_ssim=0.85, window=3):
        super().__init__()
        self.alpha_ssim = alpha_ssim
        self.ssim = SSIM(window)

    def forward(self, a, b):
        """
        a, b: Tensor [N, C, H, W]
        return: Tensor [N, H, W], channel-averaged alpha * (1 - SSIM) / 2 + (1 - alpha) * |a - b|
        """
        l1 = torch.abs(a - b).mean(1)
        if self.alpha_ssim == 0:
            return l1
        ssim_loss = ((1 - self.ssim(a, b)) / 2).mean(1)
        return self.alpha_ssim * ssim_loss + (1 - self.alpha_ssim) * l1


def ssim(a, b, window=3):
    """Channel-averaged SSIM map [H, W]."""
    a, b = _image_tensor(a), _image_tensor(b)
    _check_same_shape(a, b)
    return SSIM(window)(a, b).mean(1)[0].numpy()


def photometric_error(a, b, w: LossWeights = LossWeights(), window=3):
    a, b = _image_tensor(a), _image_tensor(b)
    _check_same_shape(a, b)
    pe = PhotometricError(w.alpha_ssim, window)(a, b)[0].numpy()
    return np.maximum(pe, 0.0)


def _masked_pe(target, candidates, w, window):
    """Stack of pe maps [K, H, W]; pixels outside a candidate's mask are +inf."""
    errors = []
    for image, mask in candidates:
        pe = photometric_error(target, image, w, window)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            _check_same_shape(mask, pe)
            pe = np.where(mask, pe, np.inf)
        errors.append(pe)
    return np.stack(errors, axis=0)


def auto_mask(target, warps, sources, w: LossWeights = LossWeights(), window=3):
    """Keep pixels where the best warped candidate beats the best unwarped source."""
    warped_min = _masked_pe(target, warps, w, window).min(0)
    identity_min = _masked_pe(target, [(s, None) for s in sources], w, window).min(0)
    return warped_min < identity_min


def min_photometric_loss(target, warps: Sequence[Tuple], mu=None, w: LossWeights = LossWeights(), sources=None, window=3):
    """
    target: ImageRaster
    warps: list of (warped ImageRaster, valid mask)
    mu: PixelMask of pixels to keep; built by auto-masking against `sources` when not given
    return: mean over kept pixels of the per-pixel minimum pe
    """
    if len(warps) == 0:
        raise InvalidInputError('min_photometric_loss needs at least one warped candidate')
    min_pe = _masked_pe(target, warps, w, window).min(0)
    keep = np.isfinite(min_pe)
    if mu is None and sources:
        mu = auto_mask(target, warps, sources, w, window)
    if mu is not None:
        mu = np.asarray(mu, dtype=bool)
        _check_same_shape(mu, min_pe)
        keep &= mu
    if not keep.any():
        warnings.warn('min_photometric_loss: no valid pixel passes the mask, returning 0.')
        return 0.0
    return float(min_pe[keep].mean())


def consistency_pairs(t):
    """Ordered pairs (i, j) with i in {t-1, t+1}, j in {t-1, t, t+1}, i != j."""
    return [(i, j) for i in (t - 1, t + 1) for j in (t - 1, t, t + 1) if i != j]


def _percentile_mean(values, percentile):
    if percentile is None or percentile >= 100.0:
        return float(values.mean())
    threshold = np.percentile(values, percentile, method='linear')
    return float(values[values <= threshold].mean())


def extra_photometric_loss(pairs: Sequence[Tuple], w: LossWeights = LossWeights(), window=3, return_flags=False):
    """
    pairs: list over S of (target ImageRaster I_i, warped ImageRaster I_{j->i}, PixelMask V_mu)
    Per pair, pe above the outlier percentile of that pair is dropped before averaging.
    A pair without valid pixels contributes 0 and is flagged.
    """
    if len(pairs) == 0:
        raise InvalidInputError('extra_photometric_loss needs at least one pair')
    terms, flags = [], []
    for target, warped, mask in pairs:
        pe = photometric_error(target, warped, w, window)
        mask = np.ones(pe.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        _check_same_shape(mask, pe)
        values = pe[mask]
        if values.size == 0:
            terms.append(0.0)
            flags.append(True)
            continue
        terms.append(_percentile_mean(values, w.outlier_percentile))
        flags.append(False)
    loss = float(np.sum(terms) / len(pairs))
    if any(flags):
        warnings.warn(f'extra_photometric_loss: {sum(flags)} of {len(pairs)} pairs had no valid pixels.')
    return (loss, flags) if return_flags else loss


def depth_consistency_loss(d_warped: DepthRaster, d_interp: DepthRaster, percentile=None):
    """Mean of |D_warped - D_interp| / (D_warped + D_interp) over jointly valid pixels."""
    a = d_warped.values if isinstance(d_warped, DepthRaster) else np.asarray(d_warped, dtype=np.float64)
    b = d_interp.values if isinstance(d_interp, DepthRaster) else np.asarray(d_interp, dtype=np.float64)
    _check_same_shape(a, b)
    both = (a > 0) & (b > 0)
    if not both.any():
        raise InvalidInputError('depth_consistency_loss: no jointly valid pixels')
    ratio = np.abs(a[both] - b[both]) / (a[both] + b[both])
    return _percentile_mean(ratio, percentile)


def total_loss(l_ph, extra_terms, dc_terms, w: LossWeights = LossWeights()):
    """
    l_ph + lambda_ph_extra * mean(extra_terms) + lambda_dc * mean(dc_terms)
    A scalar given for extra_terms / dc_terms is taken as the already averaged term.
    """
    extra = float(np.mean(np.atleast_1d(np.asarray(extra_terms, dtype=np.float64))))
    dc = float(np.mean(np.atleast_1d(np.asarray(dc_terms, dtype=np.float64))))
    return float(l_ph) + w.lambda_ph_extra * extra + w.lambda_dc * dc


class InfoNCELoss(nn.Module):
    """
    denominator:
        'typeset': sum over candidate matches m of exp(z_i^m . z_j^m / tau), with
                   desc_i / desc_j holding the candidate matches index-aligned
        'cross':   sum over m of exp(z_i^a . z_j^m / tau) (standard InfoNCE)
    """
    def __init__(self, tau=0.01, denominator='typeset'):
        super().__init__()
        assert denominator in ['typeset', 'cross'], f'unknown InfoNCE denominator "{denominator}"'
        self.tau = tau
        self.denominator = denominator

    def forward(self, z_i, z_j, gt_pairs):
        """
        z_i: Tensor [M, c], z_j: Tensor [M', c]
        gt_pairs: LongTensor [K, 2]
        """
        a, b = gt_pairs[:, 0], gt_pairs[:, 1]
        positive = (z_i[a] * z_j[b]).sum(-1) / self.tau
        if self.denominator == 'typeset':
            logits = (z_i * z_j).sum(-1) / self.tau
            log_denominator = torch.logsumexp(logits, dim=0).expand_as(positive)
        else:
            logits = z_i[a] @ z_j.T / self.tau
            log_denominator = torch.logsumexp(logits, dim=1)
        return (log_denominator - positive).mean()


def _descriptor_tensor(desc, name):
    desc = np.asarray(desc, dtype=np.float64)
    if desc.ndim != 2 or len(desc) == 0:
        raise DimensionMismatchError(f'{name} must be a nonempty [M, c] array, got shape {desc.shape}')
    norms = np.linalg.norm(desc, axis=1)
    if np.abs(norms - 1.0).max() > DESCRIPTOR_NORM_TOL:
        raise InvalidInputError(f'{name} holds descriptors that are not L2-normalized')
    return torch.as_tensor(desc)


def infonce_loss(desc_i, desc_j, gt_pairs, tau=0.01, denominator='typeset'):
    z_i = _descriptor_tensor(desc_i, 'desc_i')
    z_j = _descriptor_tensor(desc_j, 'desc_j')
    if z_i.shape[1] != z_j.shape[1]:
        raise DimensionMismatchError(f'descriptor lengths differ: {z_i.shape[1]} vs {z_j.shape[1]}')
    if denominator == 'typeset' and len(z_i) != len(z_j):
        raise DimensionMismatchError('candidate match lists must be index-aligned (equal length)')
    gt_pairs = np.asarray(gt_pairs, dtype=np.int64).reshape(-1, 2)
    if len(gt_pairs) == 0:
        raise InvalidInputError('infonce_loss needs at least one ground-truth pair')
    if gt_pairs[:, 0].max() >= len(z_i) or gt_pairs[:, 1].max() >= len(z_j) or gt_pairs.min() < 0:
        raise InvalidInputError('ground-truth pair index out of range')
    return float(InfoNCELoss(tau, denominator)(z_i, z_j, torch.as_tensor(gt_pairs)))


def specular_mask(img, threshold=0.9, kernel=13) -> np.ndarray:
    """Pixels to exclude: Y (BT.601) >= threshold, dilated by a kernel x kernel square."""
    values = img.values if isinstance(img, ImageRaster) else np.asarray(img, dtype=np.float64)
    yuv = cv2.cvtColor(values.astype(np.float32), cv2.COLOR_RGB2YUV)
    bright = (yuv[..., 0] >= threshold).astype(np.uint8)
    if not bright.any():
        return np.zeros(bright.shape, dtype=bool)
    return cv2.dilate(bright, np.ones((kernel, kernel), np.uint8)).astype(bool)
