"""Selective progressive frequency regularization.

Patches are greedily selected from the detail-injection map, masked with a
smooth taper, and compared to the SR reference in the Fourier domain: an
L1 amplitude-spectrum loss under a coarse-to-fine radial weighting, and a
late-stage wrapped-phase loss restricted to bins with shared amplitude
support.  Loss weights, the supervised radius and the high-band weight all
follow iteration-indexed schedules.
"""

from dataclasses import dataclass

import numpy as np

from .reliability import luminance

MAG_EPS = 0.0  # |z| subgradient is 0 exactly at z = 0


@dataclass
class FreqSchedule:
    t0: int = 3000           # annealing start
    td: int = 15000          # annealing end
    d0: float = 12.0         # initial frequency radius (bins)
    w_high_max: float = 0.7
    amp_start: int = 8000
    phase_start: int = 12000
    warmup: int = 1500
    lambda_amp_max: float = 0.05
    lambda_ph_max: float = 0.001
    patch_size: int = 64
    patch_count: int = 2
    support_threshold: float = 0.05  # fraction of per-patch max magnitude

    def __post_init__(self):
        if self.t0 >= self.td:
            raise ValueError("t0 must precede td")
        if self.amp_start >= self.phase_start:
            raise ValueError("amplitude must activate before phase")

    @property
    def nyquist(self):
        return self.patch_size // 2


@dataclass
class SchedulePoint:
    lambda_amp: float
    lambda_ph: float
    radius: float
    w_high: float


def schedule(sched, t):
    """Stage-dependent weights and the annealed frequency band at iteration t."""
    def ramp(start):
        if t < start:
            return 0.0
        if sched.warmup <= 0:
            return 1.0
        return min(1.0, (t - start) / sched.warmup)

    prog = min(1.0, max(0.0, (t - sched.t0) / (sched.td - sched.t0)))
    return SchedulePoint(
        lambda_amp=sched.lambda_amp_max * ramp(sched.amp_start),
        lambda_ph=sched.lambda_ph_max * ramp(sched.phase_start),
        radius=sched.d0 + prog * (sched.nyquist - sched.d0),
        w_high=prog * sched.w_high_max,
    )


@dataclass
class Patch:
    y: int
    x: int
    weight: np.ndarray  # (P, P) smooth mask in [0, 1]


def _window_sums(m, p):
    """Sum of every p x p window via an integral image; (H-p+1, W-p+1)."""
    ii = np.zeros((m.shape[0] + 1, m.shape[1] + 1))
    ii[1:, 1:] = m.cumsum(axis=0).cumsum(axis=1)
    return (ii[p:, p:] - ii[:-p, p:] - ii[p:, :-p] + ii[:-p, :-p])


def _hann2d(p):
    h = np.hanning(p)
    return np.outer(h, h)


def select_patches(m, count, size):
    """Greedy top-`count` non-overlapping size x size windows by map mass.

    Each patch mask is the map content under a Hann border taper,
    max-normalized.  Windows with zero mass are never selected, so fewer
    than `count` patches (possibly none) may be returned.
    """
    h, w = m.shape
    if h < size or w < size:
        raise ValueError("raster smaller than the patch size")
    scores = _window_sums(m, size)
    taper = _hann2d(size)
    patches = []
    for _ in range(count):
        best = np.argmax(scores)
        y, x = np.unravel_index(best, scores.shape)
        if scores[y, x] <= 0.0:
            break
        wk = m[y:y + size, x:x + size] * taper
        peak = wk.max()
        if peak > 0:
            wk = wk / peak
        patches.append(Patch(y=int(y), x=int(x), weight=wk))
        y0 = max(0, y - size + 1)
        x0 = max(0, x - size + 1)
        scores[y0:y + size, x0:x + size] = -1.0
    return patches


def _freq_distance(p):
    """Radial bin distance on the unshifted DFT layout."""
    f = (np.arange(p) + p // 2) % p - p // 2
    return np.sqrt(f[:, None] ** 2 + f[None, :] ** 2)


def _masked_spectrum(patch, weight):
    x = luminance(patch) * weight
    return np.fft.fft2(x)


def _spectrum_pixel_grad(g_complex, p):
    """Adjoint of the 2D DFT for a real input: dL/dx from dL/d(Re,Im)F."""
    return np.real(np.fft.ifft2(g_complex)) * (p * p)


def amplitude_loss(render_patch, sr_patch, weight, radius, w_high):
    """Weighted L1 distance between masked patch amplitude spectra.

    Bins with radial index <= radius carry weight 1, the rest w_high;
    returns (loss, gradient wrt render_patch).
    """
    p = weight.shape[0]
    fr = _masked_spectrum(render_patch, weight)
    fs = _masked_spectrum(sr_patch, weight)
    mag_r = np.abs(fr)
    mag_s = np.abs(fs)
    wgrid = np.where(_freq_distance(p) <= radius, 1.0, w_high)
    wsum = wgrid.sum()
    diff = mag_r - mag_s
    loss = float(np.sum(wgrid * np.abs(diff)) / wsum)

    g_mag = wgrid * np.sign(diff) / wsum
    safe = mag_r > MAG_EPS
    scale = np.where(safe, g_mag / np.where(safe, mag_r, 1.0), 0.0)
    g_f = scale * fr  # (dL/dRe, dL/dIm) = g_mag * (Re, Im)/|F|
    g_x = _spectrum_pixel_grad(g_f, p)
    grad = _to_patch_grad(g_x, weight, render_patch)
    return loss, grad


def phase_loss(render_patch, sr_patch, weight, radius, support_threshold):
    """Mean wrapped phase difference over bins with shared amplitude support.

    The valid band requires radial index <= radius and both magnitudes above
    support_threshold times their per-patch maxima; an empty band gives 0.
    """
    p = weight.shape[0]
    fr = _masked_spectrum(render_patch, weight)
    fs = _masked_spectrum(sr_patch, weight)
    mag_r = np.abs(fr)
    mag_s = np.abs(fs)
    band = (_freq_distance(p) <= radius)
    valid = band & (mag_r > support_threshold * mag_r.max()) \
        & (mag_s > support_threshold * mag_s.max())
    zero_grad = np.zeros(np.asarray(render_patch, dtype=np.float64).shape)
    if not valid.any():
        return 0.0, zero_grad

    phi = np.angle(fr * np.conj(fs))  # wrapped into (-pi, pi]
    nv = valid.sum()
    loss = float(np.sum(np.abs(phi[valid])) / nv)

    g_phi = np.where(valid, np.sign(phi) / nv, 0.0)
    m2 = np.where(valid, mag_r ** 2, 1.0)
    g_re = g_phi * (-fr.imag) / m2
    g_im = g_phi * fr.real / m2
    g_x = _spectrum_pixel_grad(g_re + 1j * g_im, p)
    grad = _to_patch_grad(g_x, weight, render_patch)
    return loss, grad


def _to_patch_grad(g_x, weight, patch):
    """Chain the luminance+mask preprocessing back to patch pixels."""
    patch = np.asarray(patch, dtype=np.float64)
    g = g_x * weight
    if patch.ndim == 3:
        return np.repeat(g[:, :, None], patch.shape[2], axis=2) / patch.shape[2]
    return g
