"""PSNR and SSIM for [0,1] images."""

import numpy as np

PSNR_CAP = 99.0


def psnr(a, b, cap=PSNR_CAP):
    """10*log10(1/MSE) over all channels, capped for (near-)identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable windowed mean, 'valid' extent: (H-s+1, W-s+1)."""
    from numpy.lib.stride_tricks import sliding_window_view
    s = len(g)
    tmp = sliding_window_view(img, s, axis=1) @ g          # (H, W-s+1)
    win = sliding_window_view(tmp, s, axis=0)              # (H-s+1, W-s+1, s)
    return win @ g


def ssim(a, b, window_size=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """Mean local SSIM with a Gaussian window over full windows only.

    RGB inputs are converted to luminance (channel mean) first; constants
    assume unit dynamic range.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    if b.ndim == 3:
        b = b.mean(axis=2)
    if a.shape[0] < window_size or a.shape[1] < window_size:
        raise ValueError("image smaller than the SSIM window")
    g = _gaussian_window(window_size, sigma)

    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    e_aa = _filter_valid(a * a, g)
    e_bb = _filter_valid(b * b, g)
    e_ab = _filter_valid(a * b, g)
    var_a = e_aa - mu_a ** 2
    var_b = e_bb - mu_b ** 2
    cov = e_ab - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
