"""Frequency-aware reliability assessment.

Builds, per view: edge support E from the SR reference, unresolved
spectral residual G between the current render and the reference,
cross-view inconsistency X from depth-based reprojection of neighboring
high-frequency responses, the fused reliability map C_rel, and the final
detail-injection map M = normalize(D * C_rel).

The high-pass operator is a centered 2D DFT with a hard radial mask
(bins at radial index <= radius are zeroed), inverse-transformed to a
spatial magnitude response.
"""

from dataclasses import dataclass, field

import numpy as np

from .demand import rasterize_demand
from .renderer import DEFAULT_SETTINGS, render

EPS = 1e-6


@dataclass
class HighpassParams:
    radius: float = 12.0  # cutoff in centered DFT bin units

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass
class ViewMaps:
    """Per-view map bundle; all (H, W) in [0, 1]."""
    D: np.ndarray
    E: np.ndarray
    G: np.ndarray
    X: np.ndarray
    C_rel: np.ndarray
    M: np.ndarray
    coverage: float = 1.0  # fraction of pixels with >= 1 valid neighbor

    def as_dict(self):
        return {"D": self.D, "E": self.E, "G": self.G, "X": self.X,
                "C_rel": self.C_rel, "M": self.M}


def normalize(img, eps=EPS):
    """Image-wise min-max normalization; constant inputs map to zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo = img.min()
    hi = img.max()
    return (img - lo) / (hi - lo + eps)


def luminance(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img.mean(axis=2)
    return img


def radial_bin_distance(height, width):
    """Distance of each centered-spectrum bin from the DC bin, in bin units."""
    fy = np.arange(height) - height // 2
    fx = np.arange(width) - width // 2
    return np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)


def highpass(img, params):
    """Radial high-pass magnitude response; exact zeros for constant input."""
    x = luminance(img)
    spec = np.fft.fftshift(np.fft.fft2(x))
    mask = radial_bin_distance(*x.shape) > params.radius
    out = np.fft.ifft2(np.fft.ifftshift(spec * mask))
    return np.abs(out)


_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def sobel_magnitude(img, eps=EPS):
    """3x3 Sobel gradient magnitude with edge-replicate borders."""
    x = luminance(img)
    p = np.pad(x, 1, mode="edge")
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    for i in range(3):
        for j in range(3):
            sub = p[i:i + x.shape[0], j:j + x.shape[1]]
            gx += _SOBEL_X[i, j] * sub
            gy += _SOBEL_Y[i, j] * sub
    return np.sqrt(gx * gx + gy * gy + eps)


def edge_support(sr):
    """E: normalized Sobel magnitude of the SR reference."""
    return normalize(sobel_magnitude(sr))


def unresolved_residual(render_hr, sr, params):
    """G: normalized |highpass(render) - highpass(reference)|."""
    hr = highpass(render_hr, params)
    hs = highpass(sr, params)
    return normalize(np.abs(hr - hs))


def spatial_gradient_residual(render_hr, sr):
    """Sobel-gradient variant of G (ablation for the residual design)."""
    return normalize(np.abs(sobel_magnitude(render_hr) - sobel_magnitude(sr)))


def bilinear_sample(img, u, v):
    """Bilinear samples at continuous coordinates (pixel centers at integers).

    Caller guarantees 0 <= u <= W-1 and 0 <= v <= H-1.
    """
    h, w = img.shape
    x0 = np.clip(np.floor(u).astype(np.int64), 0, w - 2)
    y0 = np.clip(np.floor(v).astype(np.int64), 0, h - 2)
    fu = u - x0
    fv = v - y0
    top = img[y0, x0] * (1 - fu) + img[y0, x0 + 1] * fu
    bot = img[y0 + 1, x0] * (1 - fu) + img[y0 + 1, x0 + 1] * fu
    return top * (1 - fv) + bot * fv


def reproject_highfreq(hf_source, cam_source, cam_target, depth_target,
                       alpha_target, near=1e-3):
    """Inverse-warp a source high-frequency response into the target view.

    Target pixels are unprojected through the rendered target depth
    (only where alpha > 0.5), projected into the source camera and
    bilinearly sampled.  Returns (warped (H,W), valid (H,W) bool).
    """
    h, w = depth_target.shape
    ys, xs = np.mgrid[0:h, 0:w]
    z = depth_target
    has_depth = alpha_target > 0.5

    # unproject target pixels to world space
    xc = (xs - cam_target.cx) / cam_target.fx * z
    yc = (ys - cam_target.cy) / cam_target.fy * z
    pc = np.stack([xc, yc, z], axis=-1).reshape(-1, 3)
    world = (pc - cam_target.translation) @ cam_target.rotation

    ps = world @ cam_source.rotation.T + cam_source.translation
    zs = ps[:, 2].reshape(h, w)
    front = zs > near
    zz = np.where(front, zs, 1.0)
    us = (cam_source.fx * ps[:, 0].reshape(h, w) / zz + cam_source.cx)
    vs = (cam_source.fy * ps[:, 1].reshape(h, w) / zz + cam_source.cy)
    inside = ((us >= 0.0) & (us <= cam_source.width - 1.0)
              & (vs >= 0.0) & (vs <= cam_source.height - 1.0))
    valid = has_depth & front & inside

    warped = np.zeros((h, w))
    if valid.any():
        warped[valid] = bilinear_sample(hf_source, us[valid], vs[valid])
    return warped, valid


def inconsistency(hf_target, warped_list, valid_list, quantile=0.95, eps=EPS):
    """X: quantile-normalized mean absolute deviation from reprojected
    neighbor responses; pixels with zero valid neighbors get 0."""
    if len(warped_list) == 0:
        raise ValueError("at least one neighbor required")
    h, w = hf_target.shape
    acc = np.zeros((h, w))
    count = np.zeros((h, w))
    for warped, valid in zip(warped_list, valid_list):
        acc += np.where(valid, np.abs(hf_target - warped), 0.0)
        count += valid
    any_valid = count > 0
    delta = np.where(any_valid, acc / np.maximum(count, 1.0), 0.0)
    if not any_valid.any():
        return np.zeros((h, w)), 0.0
    q = np.quantile(delta[any_valid], quantile)
    x = np.clip(delta / (q + eps), 0.0, 1.0)
    coverage = float(any_valid.mean())
    return x, coverage


def reliability_map(e, g, x):
    """C_rel = normalize(sqrt(E*G) * (1-X))."""
    return normalize(np.sqrt(e * g) * (1.0 - x))


def injection_map(d, c_rel):
    """M = normalize(D * C_rel); zero wherever either factor is zero."""
    return normalize(d * c_rel)


def neighbor_sets(cameras, count=2):
    """Indices of the `count` nearest views by camera-center distance."""
    centers = np.stack([c.center for c in cameras])
    n = len(cameras)
    out = []
    for t in range(n):
        d = np.linalg.norm(centers - centers[t], axis=1)
        d[t] = np.inf
        order = np.argsort(d, kind="stable")
        out.append([int(i) for i in order[:min(count, n - 1)]])
    return out


def build_view_maps(model, cameras, sr_images, demand_scores, hp_params,
                    neighbor_count=2, settings=DEFAULT_SETTINGS,
                    edge_maps=None, hf_sr=None, renders=None,
                    m_override_one=False, residual_variant="fourier"):
    """Compute the full per-view map bundle for the current model.

    Returns (maps, renders) so callers can reuse the renders for the
    densification residual support pass.
    """
    n_views = len(cameras)
    if edge_maps is None:
        edge_maps = [edge_support(sr) for sr in sr_images]
    if hf_sr is None:
        hf_sr = [highpass(sr, hp_params) for sr in sr_images]
    if renders is None:
        renders = [render(model, cam, settings) for cam in cameras]
    neighbors = neighbor_sets(cameras, neighbor_count)

    maps = []
    for t in range(n_views):
        out = renders[t]
        if residual_variant == "sobel":
            g = spatial_gradient_residual(out.color, sr_images[t])
        else:
            g = unresolved_residual(out.color, sr_images[t], hp_params)
        warped, valids = [], []
        for k in neighbors[t]:
            wk, vk = reproject_highfreq(hf_sr[k], cameras[k], cameras[t],
                                        out.depth, out.alpha,
                                        near=settings.near)
            warped.append(wk)
            valids.append(vk)
        x, coverage = inconsistency(hf_sr[t], warped, valids)
        c = reliability_map(edge_maps[t], g, x)
        d = rasterize_demand(model, demand_scores, cameras[t], settings)
        m = np.ones_like(d) if m_override_one else injection_map(d, c)
        maps.append(ViewMaps(D=d, E=edge_maps[t], G=g, X=x, C_rel=c, M=m,
                             coverage=coverage))
    return maps, renders
