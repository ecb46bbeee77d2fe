"""Differentiable forward splatting and its analytic backward pass.

The forward pass projects Gaussians to screen-space ellipses, sorts them
globally by mean depth and alpha-composites front to back (black
background).  The backward pass replays compositing in reverse and chains
through the conic, the EWA covariance projection, the perspective Jacobian
and the quaternion-to-rotation map, so every Gaussian parameter receives
an analytic gradient.

Numeric truncation (Mahalanobis power cutoff, minimum alpha, transmittance
termination) is configurable; `RenderSettings.exact()` disables it for
finite-difference verification.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import (COV_FLOOR, NEAR_DEFAULT, covariance3d, cov2d_eigvals,
                       perspective_jacobians, project_covariances, quat_to_rot,
                       visibility)

DEPTH_EPS = 1e-6


@dataclass(frozen=True)
class RenderSettings:
    near: float = NEAR_DEFAULT
    power_cutoff: float = 4.5   # truncate past the 3-sigma ellipse
    alpha_min: float = 1.0 / 255.0
    t_term: float = 1e-4
    cov_floor: float = COV_FLOOR

    @classmethod
    def exact(cls):
        """No spatial truncation or termination; for gradient checks."""
        return cls(power_cutoff=np.inf, alpha_min=0.0, t_term=0.0)


DEFAULT_SETTINGS = RenderSettings()


@dataclass
class RenderOutput:
    color: np.ndarray   # (H, W, 3)
    alpha: np.ndarray   # (H, W)
    depth: np.ndarray   # (H, W) alpha-normalized expected depth
    ctx: object = None  # replay context for the backward pass


class _SplatContext:
    """Depth-sorted screen-space splats plus forward replay buffers."""

    def __init__(self, order, mu, conic, opac, color, depth, bbox, pc, cov2d):
        self.order = order
        self.mu = mu
        self.conic = conic
        self.opac = opac
        self.color = color
        self.depth = depth
        self.bbox = bbox
        self.pc = pc
        self.cov2d = cov2d
        self.final_T = None
        self.last_idx = None


def _prepare_splats(model, camera, settings):
    n = len(model)
    if n == 0:
        return _SplatContext(np.zeros(0, dtype=np.int64), np.zeros((0, 2)),
                             np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)),
                             np.zeros(0), np.zeros((0, 4), dtype=np.int64),
                             np.zeros((0, 3)), np.zeros((0, 2, 2)))
    pc_all = model.positions @ camera.rotation.T + camera.translation
    z = pc_all[:, 2]
    in_front = z > settings.near
    zs = np.where(in_front, z, 1.0)
    u = camera.fx * pc_all[:, 0] / zs + camera.cx
    v = camera.fy * pc_all[:, 1] / zs + camera.cy

    cov3d = covariance3d(model.log_scales, model.rotations)
    # covariance projection only defined in front of the camera
    cov2d = np.empty((n, 2, 2))
    cov2d[:] = np.eye(2)
    if in_front.any():
        cov2d[in_front] = project_covariances(camera, pc_all[in_front],
                                              cov3d[in_front],
                                              floor=settings.cov_floor)
    lam_max = cov2d_eigvals(cov2d)[:, 1]
    vis_radius = 3.0 * np.sqrt(lam_max)
    uv = np.stack([u, v], axis=1)
    vis = visibility(camera, uv, z, vis_radius, near=settings.near)

    idx = np.nonzero(vis)[0]
    order = idx[np.argsort(z[idx], kind="stable")]

    mu = uv[order]
    cov2d_o = cov2d[order]
    det = (cov2d_o[:, 0, 0] * cov2d_o[:, 1, 1]
           - cov2d_o[:, 0, 1] * cov2d_o[:, 0, 1])
    conic = np.stack([cov2d_o[:, 1, 1] / det,
                      -cov2d_o[:, 0, 1] / det,
                      cov2d_o[:, 0, 0] / det], axis=1)

    if np.isfinite(settings.power_cutoff):
        r_bb = np.sqrt(2.0 * settings.power_cutoff * lam_max[order])
        x0 = np.clip(np.ceil(mu[:, 0] - r_bb), 0, camera.width).astype(np.int64)
        x1 = np.clip(np.floor(mu[:, 0] + r_bb) + 1, 0, camera.width).astype(np.int64)
        y0 = np.clip(np.ceil(mu[:, 1] - r_bb), 0, camera.height).astype(np.int64)
        y1 = np.clip(np.floor(mu[:, 1] + r_bb) + 1, 0, camera.height).astype(np.int64)
        bbox = np.stack([x0, x1, y0, y1], axis=1)
    else:
        bbox = np.tile(np.array([0, camera.width, 0, camera.height],
                                dtype=np.int64), (len(order), 1))

    return _SplatContext(order, np.ascontiguousarray(mu),
                         np.ascontiguousarray(conic),
                         np.ascontiguousarray(model.opacities[order]),
                         np.ascontiguousarray(model.colors[order]),
                         np.ascontiguousarray(z[order]),
                         np.ascontiguousarray(bbox),
                         pc_all[order], cov2d_o)


def render(model, camera, settings=DEFAULT_SETTINGS):
    """Forward splat; returns color/alpha/expected-depth planes."""
    ctx = _prepare_splats(model, camera, settings)
    color, alpha, depth_acc, final_T, last_idx = kernels.composite_forward(
        ctx.mu, ctx.conic, ctx.opac, ctx.color, ctx.depth, ctx.bbox,
        camera.width, camera.height,
        settings.power_cutoff, settings.alpha_min, settings.t_term)
    ctx.final_T = final_T
    ctx.last_idx = last_idx
    depth = np.where(alpha > 0.0, depth_acc / np.maximum(alpha, DEPTH_EPS), 0.0)
    return RenderOutput(color=color, alpha=alpha, depth=depth, ctx=ctx)


def render_scalar(model, camera, values, settings=DEFAULT_SETTINGS):
    """Composite a per-Gaussian scalar; returns (sum(w*value), alpha)."""
    ctx = _prepare_splats(model, camera, settings)
    vals = np.ascontiguousarray(np.asarray(values, dtype=np.float64)[ctx.order])
    return kernels.composite_scalar(
        ctx.mu, ctx.conic, ctx.opac, vals, ctx.bbox,
        camera.width, camera.height,
        settings.power_cutoff, settings.alpha_min, settings.t_term)


def support_sums(model, camera, map_a, map_b, settings=DEFAULT_SETTINGS,
                 w_min=1.0 / 255.0):
    """Per-Gaussian sums of two pixel maps over each Gaussian's support
    (compositing weight > w_min). Returns (N,) arrays in model order."""
    ctx = _prepare_splats(model, camera, settings)
    sa, sb = kernels.accumulate_support(
        ctx.mu, ctx.conic, ctx.opac, ctx.bbox, camera.width, camera.height,
        settings.power_cutoff, settings.alpha_min, settings.t_term, w_min,
        np.ascontiguousarray(map_a, dtype=np.float64),
        np.ascontiguousarray(map_b, dtype=np.float64))
    out_a = np.zeros(len(model))
    out_b = np.zeros(len(model))
    out_a[ctx.order] = sa
    out_b[ctx.order] = sb
    return out_a, out_b


@dataclass
class ParamGrads:
    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    screen_grad_norm: np.ndarray  # per-Gaussian ||dL/d mu_2D||_2
    visible: np.ndarray           # bool, Gaussians included in the render


def _quat_rot_jacobian(qn):
    """d(R)/d(q) for unit quaternions qn (N,4); returns (N,4,3,3)."""
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    o = np.zeros_like(w)
    jw = np.stack([o, -2 * z, 2 * y, 2 * z, o, -2 * x, -2 * y, 2 * x, o], axis=1)
    jx = np.stack([o, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x], axis=1)
    jy = np.stack([-4 * y, 2 * x, 2 * w, 2 * x, o, 2 * z, -2 * w, 2 * z, -4 * y], axis=1)
    jz = np.stack([-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, o], axis=1)
    return np.stack([jw, jx, jy, jz], axis=1).reshape(-1, 4, 3, 3)


def render_backward(model, camera, grad_color, settings=DEFAULT_SETTINGS,
                    out=None, accumulate_stats=False):
    """Analytic gradients of a scalar loss wrt all Gaussian parameters.

    grad_color is dL/d(rendered color), shape (H, W, 3).  When `out` is the
    RenderOutput of a matching forward pass its replay buffers are reused.
    With accumulate_stats=True the screen-gradient norm, position gradient
    and observation count are added to the model's stats accumulators.
    """
    if out is not None and out.ctx is not None and out.ctx.final_T is not None:
        ctx = out.ctx
    else:
        ctx = render(model, camera, settings).ctx

    n = len(model)
    grads = ParamGrads(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)),
                       np.zeros(n), np.zeros((n, 3)),
                       np.zeros(n), np.zeros(n, dtype=bool))
    grads.visible[ctx.order] = True
    if len(ctx.order) == 0:
        return grads

    d_mu, d_conic, d_opac_act, d_color = kernels.composite_backward(
        ctx.mu, ctx.conic, ctx.opac, ctx.color, ctx.bbox,
        camera.width, camera.height,
        settings.power_cutoff, settings.alpha_min,
        ctx.final_T, ctx.last_idx,
        np.ascontiguousarray(grad_color, dtype=np.float64))

    order = ctx.order
    opac = ctx.opac
    pc = ctx.pc

    grads.colors[order] = d_color
    grads.opacity_logits[order] = d_opac_act * opac * (1.0 - opac)

    # conic -> 2D covariance: A = Sigma^-1, dL/dSigma = -A G_A A
    g_a = np.empty((len(order), 2, 2))
    g_a[:, 0, 0] = d_conic[:, 0]
    g_a[:, 0, 1] = 0.5 * d_conic[:, 1]
    g_a[:, 1, 0] = 0.5 * d_conic[:, 1]
    g_a[:, 1, 1] = d_conic[:, 2]
    a_mat = np.empty_like(g_a)
    a_mat[:, 0, 0] = ctx.conic[:, 0]
    a_mat[:, 0, 1] = ctx.conic[:, 1]
    a_mat[:, 1, 0] = ctx.conic[:, 1]
    a_mat[:, 1, 1] = ctx.conic[:, 2]
    g_sigma2 = -np.einsum('nij,njk,nkl->nil', a_mat, g_a, a_mat)

    # Sigma2 = J M J^T (+ floor): chain to M, J
    w_mat = camera.rotation
    cov3d = covariance3d(model.log_scales[order], model.rotations[order])
    m_mat = np.einsum('ij,njk,lk->nil', w_mat, cov3d, w_mat)
    j_mat = perspective_jacobians(camera, pc)
    g_j = 2.0 * np.einsum('nij,njk,nkl->nil', g_sigma2, j_mat, m_mat)
    g_m = np.einsum('nji,njk,nkl->nil', j_mat, g_sigma2, j_mat)

    # camera-space point gradient: projection path + Jacobian path
    tx, ty, tz = pc[:, 0], pc[:, 1], pc[:, 2]
    fx, fy = camera.fx, camera.fy
    d_t = np.zeros((len(order), 3))
    d_t[:, 0] = d_mu[:, 0] * fx / tz
    d_t[:, 1] = d_mu[:, 1] * fy / tz
    d_t[:, 2] = (-d_mu[:, 0] * fx * tx / tz ** 2
                 - d_mu[:, 1] * fy * ty / tz ** 2)
    d_t[:, 0] += g_j[:, 0, 2] * (-fx / tz ** 2)
    d_t[:, 1] += g_j[:, 1, 2] * (-fy / tz ** 2)
    d_t[:, 2] += (g_j[:, 0, 0] * (-fx / tz ** 2)
                  + g_j[:, 1, 1] * (-fy / tz ** 2)
                  + g_j[:, 0, 2] * (2.0 * fx * tx / tz ** 3)
                  + g_j[:, 1, 2] * (2.0 * fy * ty / tz ** 3))
    grads.positions[order] = d_t @ w_mat  # R^T d_t, vectorized

    # M = W Sigma3 W^T -> Sigma3 = R_q diag(exp(2 ls)) R_q^T
    g_sigma3 = np.einsum('ji,njk,kl->nil', w_mat, g_m, w_mat)
    qn = model.rotations[order] / np.linalg.norm(model.rotations[order],
                                                 axis=1, keepdims=True)
    r3 = quat_to_rot(qn)
    d_diag = np.exp(2.0 * model.log_scales[order])
    g_d = np.einsum('nji,njk,nkl->nil', r3, g_sigma3, r3)
    grads.log_scales[order] = (np.einsum('nkk->nk', g_d)
                               * 2.0 * d_diag)
    g_r3 = 2.0 * np.einsum('nij,njk,nk->nik', g_sigma3, r3, d_diag)
    jq = _quat_rot_jacobian(qn)
    d_qn = np.einsum('ncij,nij->nc', jq, g_r3)
    # chain through q / |q|
    qraw = model.rotations[order]
    norm = np.linalg.norm(qraw, axis=1, keepdims=True)
    d_q = (d_qn - np.sum(d_qn * qn, axis=1, keepdims=True) * qn) / norm
    grads.rotations[order] = d_q

    grads.screen_grad_norm[order] = np.linalg.norm(d_mu, axis=1)

    if accumulate_stats:
        model.grad_norm_sum += grads.screen_grad_norm
        model.grad_pos_sum += grads.positions
        model.obs_count += grads.visible.astype(np.int64)

    return grads


def downsample(img, factor):
    """Non-overlapping factor x factor block means, per channel."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"size {w}x{h} not divisible by factor {factor}")
    if img.ndim == 2:
        return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return img.reshape(h // factor, factor, w // factor, factor, -1).mean(axis=(1, 3))


def downsample_backward(grad_low, factor):
    """Adjoint of `downsample`: broadcast each block gradient / factor^2."""
    factor = int(factor)
    g = np.repeat(np.repeat(grad_low, factor, axis=0), factor, axis=1)
    return g / (factor * factor)
