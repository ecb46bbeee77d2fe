"""Geometry-guided detail-demand estimation.

A Gaussian observed at similar (typically insufficient) screen scale across
all its views has a cross-view sampling ratio near 1 and receives a high
demand score; Gaussians already well sampled in some view score low.  The
scores are splatted to each view with the renderer's compositing weights
(alpha-normalized) to form a per-view demand map.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import covariance3d, cov2d_eigvals, project_covariances, visibility
from .renderer import DEFAULT_SETTINGS, render_scalar

NORM_EPS = 1e-6


@dataclass
class DemandParams:
    tau: float = 2.0   # transition threshold on the sampling ratio
    k: float = 0.25    # transition smoothness

    def __post_init__(self):
        if self.tau < 1.0:
            raise ValueError("tau must be >= 1")
        if self.k <= 0.0:
            raise ValueError("k must be positive")


def per_view_radii(model, cameras, settings=DEFAULT_SETTINGS):
    """Screen radii of every Gaussian in every view.

    Returns (radii (V,N), visible (V,N) bool); radii are only meaningful
    where visible.
    """
    n = len(model)
    v = len(cameras)
    radii = np.zeros((v, n))
    vis = np.zeros((v, n), dtype=bool)
    if n == 0:
        return radii, vis
    cov3d = covariance3d(model.log_scales, model.rotations)
    for t, cam in enumerate(cameras):
        pc = model.positions @ cam.rotation.T + cam.translation
        z = pc[:, 2]
        in_front = z > settings.near
        if not in_front.any():
            continue
        cov2d = project_covariances(cam, pc[in_front], cov3d[in_front],
                                    floor=settings.cov_floor)
        lam_max = cov2d_eigvals(cov2d)[:, 1]
        r = 3.0 * np.sqrt(lam_max)
        zs = np.where(in_front, z, 1.0)
        uv = np.stack([cam.fx * pc[:, 0] / zs + cam.cx,
                       cam.fy * pc[:, 1] / zs + cam.cy], axis=1)
        r_full = np.zeros(n)
        r_full[in_front] = r
        ok = visibility(cam, uv, z, r_full, near=settings.near)
        vis[t] = ok
        radii[t, ok] = r_full[ok]
    return radii, vis


def sampling_ratio(radii):
    """max/min over one Gaussian's per-view radii; a single view gives 1."""
    radii = np.asarray(radii, dtype=np.float64)
    if radii.size == 0:
        raise ValueError("at least one visible view required")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    return float(radii.max() / radii.min())


def sampling_ratios(radii, vis):
    """Vectorized ratios from per_view_radii output.

    Gaussians visible in zero views get rho = 1 (maximal demand direction);
    returns (rho (N,), orphan (N,) bool) with orphan flagging those.
    """
    r = np.where(vis, radii, np.inf)
    rmin = r.min(axis=0)
    r = np.where(vis, radii, -np.inf)
    rmax = r.max(axis=0)
    orphan = ~vis.any(axis=0)
    rho = np.ones(radii.shape[1])
    seen = ~orphan
    rho[seen] = rmax[seen] / rmin[seen]
    return rho, orphan


def demand_score(rho, params):
    """d = 1 - sigmoid((rho - tau)/k); strictly decreasing in rho."""
    rho = np.asarray(rho, dtype=np.float64)
    return 1.0 - 1.0 / (1.0 + np.exp(-(rho - params.tau) / params.k))


def compute_demand(model, cameras, params, settings=DEFAULT_SETTINGS):
    """Demand score per Gaussian from its cross-view radii."""
    radii, vis = per_view_radii(model, cameras, settings)
    rho, _ = sampling_ratios(radii, vis)
    return demand_score(rho, params)


def rasterize_demand(model, scores, camera, settings=DEFAULT_SETTINGS,
                     eps=NORM_EPS):
    """Splat per-Gaussian demand through the compositing weights.

    Alpha-normalized where alpha > eps, zero elsewhere; clamped to [0,1].
    """
    scores = np.asarray(scores, dtype=np.float64)
    if np.any(scores < 0) or np.any(scores > 1):
        raise ValueError("demand scores must lie in [0,1]")
    acc, alpha = render_scalar(model, camera, scores, settings)
    d = np.where(alpha > eps, acc / np.maximum(alpha, eps), 0.0)
    return np.clip(d, 0.0, 1.0)
