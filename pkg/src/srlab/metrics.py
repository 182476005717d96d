"""Full-reference quality metrics computed in 8-bit units (v * 255).

MSE pools every value of every channel; PSNR follows from MSE with
MAX = 255; SSIM is the mean over all valid window positions of the usual
Gaussian-windowed luminance/contrast/structure index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image_core import EIGHT_BIT, PixelDepth, check_plane, check_rgb, quantize


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd size")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")

    def kernel_1d(self) -> np.ndarray:
        half = self.window // 2
        t = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(t * t) / (2.0 * self.sigma**2))
        return g / g.sum()

    def kernel_2d(self) -> np.ndarray:
        g = self.kernel_1d()
        return np.outer(g, g)


def _to_units(a, depth, quantized):
    a = np.asarray(a, dtype=np.float64)
    if quantized:
        return quantize(a, depth).astype(np.float64)
    return a * depth.max_value


def mse(a, b, depth: PixelDepth = EIGHT_BIT, quantized=False) -> float:
    """Mean squared difference over every sample of two same-shaped images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = _to_units(a, depth, quantized) - _to_units(b, depth, quantized)
    return float(np.mean(diff * diff))


def psnr(mse_value, depth: PixelDepth = EIGHT_BIT) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when ``mse_value`` is zero."""
    if mse_value < 0:
        raise ValueError("mse must be non-negative")
    if mse_value == 0:
        return math.inf
    return 10.0 * math.log10(depth.max_value**2 / mse_value)


def _filter_valid(x, g):
    """Separable 'valid' correlation of a 2-D array with the 1-D kernel g."""
    n = g.shape[0]
    x = sliding_window_view(x, n, axis=0) @ g
    return sliding_window_view(x, n, axis=1) @ g


def ssim_map(a, b, params: SsimParams = SsimParams(), depth: PixelDepth = EIGHT_BIT, quantized=False):
    a = check_plane(a)
    b = check_plane(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < params.window:
        raise ValueError(f"image {a.shape} smaller than the {params.window}x{params.window} window")
    a = _to_units(a, depth, quantized)
    b = _to_units(b, depth, quantized)
    g = params.kernel_1d()
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2

    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, params: SsimParams = SsimParams(), depth: PixelDepth = EIGHT_BIT, quantized=False) -> float:
    return float(np.mean(ssim_map(a, b, params, depth, quantized)))


def ssim_rgb(a, b, params: SsimParams = SsimParams(), depth: PixelDepth = EIGHT_BIT, quantized=False) -> float:
    """Mean of the three per-channel SSIM values."""
    a, b = check_rgb(a), check_rgb(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    values = [ssim(a[:, :, c], b[:, :, c], params, depth, quantized) for c in range(3)]
    return sum(values) / 3.0


@dataclass(frozen=True)
class MetricRow:
    image: str
    method: str
    mse: float
    psnr: float
    ssim: float
    category: str = ""


def evaluate(reference, candidate, params: SsimParams = SsimParams(), quantized=False):
    """``(mse, psnr, ssim)`` of an RGB candidate against its RGB reference."""
    m = mse(reference, candidate, quantized=quantized)
    return m, psnr(m), ssim_rgb(reference, candidate, params, quantized=quantized)
