"""Training loss and evaluation metrics.

The loss couples a mean absolute error term with a spectral-angle term
(weight lambda, default 0.2). Metrics operate on clamped [0, 1] cubes laid
out (bands, height, width): band-averaged PSNR, Gaussian-windowed SSIM,
spectral angle in degrees, band-averaged Pearson correlation, and ERGAS.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DomainError, ShapeError
from .tensor import Tensor, acos_clamped, maximum, sqrt, tensor_abs

__all__ = ["LossBreakdown", "l1_loss", "sam_loss", "total_loss",
           "MetricsReport", "metric_psnr", "metric_ssim", "metric_sam",
           "metric_cc", "metric_ergas", "evaluate_all"]


# -- losses ---------------------------------------------------------------

def _check_pair(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {gt.shape}")


def l1_loss(pred, gt):
    """Mean absolute error over every element."""
    _check_pair(pred, gt)
    return tensor_abs(pred - gt).mean()


def sam_loss(pred, gt):
    """Mean spectral angle over pixels, scaled to [0, 1] by 1/pi.

    Spectra are the band vectors at each position of a (batch, bands, h, w)
    pair. The cosine denominator is floored at 1e-8; the arccos value is
    exact at the endpoints while its derivative is clamped to stay finite.
    """
    _check_pair(pred, gt)
    if pred.ndim != 4:
        raise ShapeError(f"sam_loss needs rank-4 inputs; got rank {pred.ndim}")
    dot = (pred * gt).sum(axis=1)
    norm_p = (pred * pred).sum(axis=1)
    norm_g = (gt * gt).sum(axis=1)
    denom = maximum(sqrt(norm_p * norm_g), 1e-8)
    angle = acos_clamped(dot / denom)
    return angle.mean() * (1.0 / math.pi)


@dataclass
class LossBreakdown:
    pix: Tensor
    sam: Tensor
    total: Tensor
    lam: float


def total_loss(pred, gt, lam=0.2):
    """Composite objective: pix + lam * sam, reported term by term."""
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative; got {lam}")
    pix = l1_loss(pred, gt)
    sam = sam_loss(pred, gt)
    total = pix + sam * lam
    return LossBreakdown(pix=pix, sam=sam, total=total, lam=lam)


# -- metrics --------------------------------------------------------------

@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    sam_deg: float
    cc: float
    ergas: float
    scale: int

    def to_line(self):
        return (f"psnr={self.psnr:.4f} ssim={self.ssim:.4f} "
                f"sam_deg={self.sam_deg:.4f} cc={self.cc:.4f} "
                f"ergas={self.ergas:.4f} scale={self.scale}")

    @staticmethod
    def tsv_header():
        return "psnr\tssim\tsam_deg\tcc\tergas\tscale"

    def to_tsv(self):
        return (f"{self.psnr:.6f}\t{self.ssim:.6f}\t{self.sam_deg:.6f}\t"
                f"{self.cc:.6f}\t{self.ergas:.6f}\t{self.scale}")


def _check_cube_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim != 3:
        raise ShapeError(f"metrics need (bands, h, w) arrays; got rank {pred.ndim}")
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    for label, arr in (("prediction", pred), ("target", gt)):
        if not np.isfinite(arr).all():
            raise DomainError(f"{label} contains non-finite values")
        lo, hi = arr.min(), arr.max()
        if lo < -1e-6 or hi > 1 + 1e-6:
            raise DomainError(
                f"{label} values lie in [{lo:.6g}, {hi:.6g}]; expected [0, 1]")
    return pred, gt


def metric_psnr(pred, gt):
    """Band-averaged peak signal-to-noise ratio in dB, 100 dB cap per band."""
    pred, gt = _check_cube_pair(pred, gt)
    out = []
    for b in range(pred.shape[0]):
        diff = pred[b] - gt[b]
        mse = float(np.mean(diff * diff))
        out.append(100.0 if mse < 1e-10 else 10.0 * math.log10(1.0 / mse))
    return float(np.mean(out))


def _gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    w = np.exp(-(coords * coords) / (2.0 * sigma * sigma))
    return w / w.sum()


def _windowed_mean(plane, w1d):
    """Separable Gaussian local mean with reflect borders."""
    pad = (len(w1d) - 1) // 2
    padded = np.pad(plane, pad, mode="reflect")
    tmp = sliding_window_view(padded, len(w1d), axis=0) @ w1d
    return sliding_window_view(tmp, len(w1d), axis=1) @ w1d


def metric_ssim(pred, gt, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity per band, averaged over bands.

    11x11 Gaussian window (sigma 1.5) on reflect-padded planes, dynamic
    range 1.
    """
    pred, gt = _check_cube_pair(pred, gt)
    if pred.shape[1] < 2 or pred.shape[2] < 2:
        raise ShapeError(f"ssim needs at least 2x2 planes; got {pred.shape[1:]}")
    w1d = _gaussian_window(window, sigma)
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    out = []
    for b in range(pred.shape[0]):
        x, y = pred[b], gt[b]
        mx = _windowed_mean(x, w1d)
        my = _windowed_mean(y, w1d)
        exx = _windowed_mean(x * x, w1d)
        eyy = _windowed_mean(y * y, w1d)
        exy = _windowed_mean(x * y, w1d)
        vx = exx - mx * mx
        vy = eyy - my * my
        cxy = exy - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        out.append(float(np.mean(num / den)))
    return float(np.mean(out))


def metric_sam(pred, gt):
    """Mean per-pixel spectral angle in degrees."""
    pred, gt = _check_cube_pair(pred, gt)
    dot = (pred * gt).sum(axis=0)
    np_ = (pred * pred).sum(axis=0)
    ng = (gt * gt).sum(axis=0)
    denom = np.maximum(np.sqrt(np_ * ng), 1e-8)
    cos = np.clip(dot / denom, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


def metric_cc(pred, gt):
    """Band-averaged Pearson correlation, variances floored at 1e-12."""
    pred, gt = _check_cube_pair(pred, gt)
    out = []
    for b in range(pred.shape[0]):
        dx = pred[b] - pred[b].mean()
        dy = gt[b] - gt[b].mean()
        cov = (dx * dy).mean()
        vx = (dx * dx).mean()
        vy = (dy * dy).mean()
        out.append(cov / np.sqrt(max(vx, 1e-12) * max(vy, 1e-12)))
    return float(np.mean(out))


def metric_ergas(pred, gt, scale):
    """Relative global dimensionless error: 100/scale * rms of per-band
    MSE over squared band mean (mean floored at 1e-8)."""
    pred, gt = _check_cube_pair(pred, gt)
    if not isinstance(scale, int) or scale < 1:
        raise ConfigError(f"scale must be a positive integer; got {scale!r}")
    terms = []
    for b in range(pred.shape[0]):
        diff = pred[b] - gt[b]
        mse = (diff * diff).mean()
        mu = max(float(gt[b].mean()), 1e-8)
        terms.append(mse / (mu * mu))
    return float(100.0 / scale * math.sqrt(np.mean(terms)))


def evaluate_all(pred_cube, gt_cube, scale):
    """Clamp the prediction to [0, 1] and run the full metric suite.

    Accepts cubes with a .values array or raw (bands, h, w) arrays.
    """
    pred = np.asarray(getattr(pred_cube, "values", pred_cube), dtype=np.float64)
    gt = np.asarray(getattr(gt_cube, "values", gt_cube), dtype=np.float64)
    pred = np.clip(pred, 0.0, 1.0)
    return MetricsReport(
        psnr=metric_psnr(pred, gt),
        ssim=metric_ssim(pred, gt),
        sam_deg=metric_sam(pred, gt),
        cc=metric_cc(pred, gt),
        ergas=metric_ergas(pred, gt, scale),
        scale=scale,
    )
