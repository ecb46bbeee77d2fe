"""Pure-NumPy reference implementations of the compositing kernels.

Same contract as the compiled module: splats arrive depth-sorted
(front to back) with precomputed screen means, inverse 2x2 covariances
(conics), activated opacities and integer pixel bounding boxes.  Pixel
(iy, ix) is sampled at continuous coordinates (u=ix, v=iy).

These are the fallback used when the compiled extension is unavailable;
they favour clarity over speed and iterate splats in Python.
"""

import numpy as np

ALPHA_CLAMP = 0.99


def composite_forward(mu, conic, opac, color, depth, bbox, width, height,
                      power_cutoff, alpha_min, t_term):
    """Front-to-back alpha compositing of depth-sorted splats.

    Returns (color, alpha, depth_acc, final_T, last_idx) where alpha is the
    accumulated sum of per-splat weights, depth_acc is sum(w * z), final_T the
    remaining transmittance and last_idx the sorted index of the last
    contributing splat per pixel (-1 where none contributed).
    """
    n = mu.shape[0]
    out_color = np.zeros((height, width, 3))
    out_alpha = np.zeros((height, width))
    out_depth = np.zeros((height, width))
    trans = np.ones((height, width))
    last_idx = np.full((height, width), -1, dtype=np.int64)

    for i in range(n):
        x0, x1, y0, y1 = bbox[i]
        if x1 <= x0 or y1 <= y0:
            continue
        dx = np.arange(x0, x1) - mu[i, 0]
        dy = np.arange(y0, y1) - mu[i, 1]
        dxg, dyg = np.meshgrid(dx, dy)
        q = 0.5 * (conic[i, 0] * dxg * dxg
                   + 2.0 * conic[i, 1] * dxg * dyg
                   + conic[i, 2] * dyg * dyg)
        alpha = np.minimum(ALPHA_CLAMP, opac[i] * np.exp(-q))
        tsub = trans[y0:y1, x0:x1]
        active = (q <= power_cutoff) & (alpha >= alpha_min) & (tsub >= t_term)
        if not active.any():
            continue
        w = np.where(active, alpha * tsub, 0.0)
        out_color[y0:y1, x0:x1] += w[:, :, None] * color[i]
        out_alpha[y0:y1, x0:x1] += w
        out_depth[y0:y1, x0:x1] += w * depth[i]
        trans[y0:y1, x0:x1] = np.where(active, tsub * (1.0 - alpha), tsub)
        sub_last = last_idx[y0:y1, x0:x1]
        last_idx[y0:y1, x0:x1] = np.where(active, i, sub_last)

    return out_color, out_alpha, out_depth, trans, last_idx


def composite_backward(mu, conic, opac, color, bbox, width, height,
                       power_cutoff, alpha_min, final_T, last_idx, grad_color):
    """Back-to-front replay of the forward pass accumulating gradients.

    Returns (d_mu, d_conic, d_opac, d_color); d_conic holds (da, db, dc)
    gradients of the conic parameters with the off-diagonal counted once.
    """
    n = mu.shape[0]
    d_mu = np.zeros((n, 2))
    d_conic = np.zeros((n, 3))
    d_opac = np.zeros(n)
    d_color = np.zeros((n, 3))

    trans = final_T.copy()
    suffix = np.zeros((height, width, 3))

    for i in range(n - 1, -1, -1):
        x0, x1, y0, y1 = bbox[i]
        if x1 <= x0 or y1 <= y0:
            continue
        dx = np.arange(x0, x1) - mu[i, 0]
        dy = np.arange(y0, y1) - mu[i, 1]
        dxg, dyg = np.meshgrid(dx, dy)
        q = 0.5 * (conic[i, 0] * dxg * dxg
                   + 2.0 * conic[i, 1] * dxg * dyg
                   + conic[i, 2] * dyg * dyg)
        g = np.exp(-q)
        raw = opac[i] * g
        clamped = raw > ALPHA_CLAMP
        alpha = np.where(clamped, ALPHA_CLAMP, raw)
        active = (q <= power_cutoff) & (alpha >= alpha_min) \
            & (last_idx[y0:y1, x0:x1] >= i)
        if not active.any():
            continue

        one_m = 1.0 - alpha
        t_here = np.where(active, trans[y0:y1, x0:x1] / one_m, 0.0)
        w = alpha * t_here
        gc = grad_color[y0:y1, x0:x1]

        d_color[i] += np.einsum('yx,yxc->c', w, gc)
        # dC/dalpha = T_i * c_i - suffix/(1-alpha)
        suf = suffix[y0:y1, x0:x1]
        d_alpha = np.einsum('yxc,yxc->yx',
                            gc,
                            t_here[:, :, None] * color[i]
                            - suf / one_m[:, :, None])
        d_alpha = np.where(active & ~clamped, d_alpha, 0.0)

        d_opac[i] += np.sum(d_alpha * g)
        dq = -d_alpha * alpha
        d_conic[i, 0] += np.sum(dq * 0.5 * dxg * dxg)
        d_conic[i, 1] += np.sum(dq * dxg * dyg)
        d_conic[i, 2] += np.sum(dq * dyg * dyg * 0.5)
        # q depends on mu through dx = x - mu_x
        d_mu[i, 0] += np.sum(-dq * (conic[i, 0] * dxg + conic[i, 1] * dyg))
        d_mu[i, 1] += np.sum(-dq * (conic[i, 1] * dxg + conic[i, 2] * dyg))

        suffix[y0:y1, x0:x1] += np.where(active, w, 0.0)[:, :, None] * color[i]
        trans[y0:y1, x0:x1] = np.where(active, t_here, trans[y0:y1, x0:x1])

    return d_mu, d_conic, d_opac, d_color


def composite_scalar(mu, conic, opac, value, bbox, width, height,
                     power_cutoff, alpha_min, t_term):
    """Composite a per-splat scalar; returns (sum(w*value), alpha)."""
    n = mu.shape[0]
    out_val = np.zeros((height, width))
    out_alpha = np.zeros((height, width))
    trans = np.ones((height, width))

    for i in range(n):
        x0, x1, y0, y1 = bbox[i]
        if x1 <= x0 or y1 <= y0:
            continue
        dx = np.arange(x0, x1) - mu[i, 0]
        dy = np.arange(y0, y1) - mu[i, 1]
        dxg, dyg = np.meshgrid(dx, dy)
        q = 0.5 * (conic[i, 0] * dxg * dxg
                   + 2.0 * conic[i, 1] * dxg * dyg
                   + conic[i, 2] * dyg * dyg)
        alpha = np.minimum(ALPHA_CLAMP, opac[i] * np.exp(-q))
        tsub = trans[y0:y1, x0:x1]
        active = (q <= power_cutoff) & (alpha >= alpha_min) & (tsub >= t_term)
        if not active.any():
            continue
        w = np.where(active, alpha * tsub, 0.0)
        out_val[y0:y1, x0:x1] += w * value[i]
        out_alpha[y0:y1, x0:x1] += w
        trans[y0:y1, x0:x1] = np.where(active, tsub * (1.0 - alpha), tsub)

    return out_val, out_alpha


def accumulate_support(mu, conic, opac, bbox, width, height,
                       power_cutoff, alpha_min, t_term, w_min, map_a, map_b):
    """Per-splat sums of two maps over pixels where the splat weight > w_min.

    Returns (sum_a, sum_b) of shape (n,).  The support region follows the
    same compositing weights as the forward pass.
    """
    n = mu.shape[0]
    sum_a = np.zeros(n)
    sum_b = np.zeros(n)
    trans = np.ones((height, width))

    for i in range(n):
        x0, x1, y0, y1 = bbox[i]
        if x1 <= x0 or y1 <= y0:
            continue
        dx = np.arange(x0, x1) - mu[i, 0]
        dy = np.arange(y0, y1) - mu[i, 1]
        dxg, dyg = np.meshgrid(dx, dy)
        q = 0.5 * (conic[i, 0] * dxg * dxg
                   + 2.0 * conic[i, 1] * dxg * dyg
                   + conic[i, 2] * dyg * dyg)
        alpha = np.minimum(ALPHA_CLAMP, opac[i] * np.exp(-q))
        tsub = trans[y0:y1, x0:x1]
        active = (q <= power_cutoff) & (alpha >= alpha_min) & (tsub >= t_term)
        if not active.any():
            continue
        w = np.where(active, alpha * tsub, 0.0)
        support = w > w_min
        sum_a[i] = np.sum(map_a[y0:y1, x0:x1], where=support)
        sum_b[i] = np.sum(map_b[y0:y1, x0:x1], where=support)
        trans[y0:y1, x0:x1] = np.where(active, tsub * (1.0 - alpha), tsub)

    return sum_a, sum_b
