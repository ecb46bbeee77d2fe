# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled compositing kernels.

Mirrors kernels._ref exactly (same contract, same skip rules, same
accumulation order per pixel); see that module for the semantics.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()

DEF ALPHA_CLAMP = 0.99


def composite_forward(double[:, ::1] mu, double[:, ::1] conic,
                      double[::1] opac, double[:, ::1] color,
                      double[::1] depth, long[:, ::1] bbox,
                      int width, int height,
                      double power_cutoff, double alpha_min, double t_term):
    cdef int n = mu.shape[0]
    out_color_arr = np.zeros((height, width, 3))
    out_alpha_arr = np.zeros((height, width))
    out_depth_arr = np.zeros((height, width))
    trans_arr = np.ones((height, width))
    last_idx_arr = np.full((height, width), -1, dtype=np.int64)

    cdef double[:, :, ::1] out_color = out_color_arr
    cdef double[:, ::1] out_alpha = out_alpha_arr
    cdef double[:, ::1] out_depth = out_depth_arr
    cdef double[:, ::1] trans = trans_arr
    cdef long[:, ::1] last_idx = last_idx_arr

    cdef int i, x, y, x0, x1, y0, y1
    cdef double a, b, c, o, mx, my, z, c0, c1, c2
    cdef double dx, dy, q, alpha, t, w

    for i in range(n):
        x0 = <int>bbox[i, 0]; x1 = <int>bbox[i, 1]
        y0 = <int>bbox[i, 2]; y1 = <int>bbox[i, 3]
        if x1 <= x0 or y1 <= y0:
            continue
        a = conic[i, 0]; b = conic[i, 1]; c = conic[i, 2]
        o = opac[i]; mx = mu[i, 0]; my = mu[i, 1]; z = depth[i]
        c0 = color[i, 0]; c1 = color[i, 1]; c2 = color[i, 2]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                dx = x - mx
                q = 0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
                if q > power_cutoff:
                    continue
                alpha = o * exp(-q)
                if alpha > ALPHA_CLAMP:
                    alpha = ALPHA_CLAMP
                if alpha < alpha_min:
                    continue
                t = trans[y, x]
                if t < t_term:
                    continue
                w = alpha * t
                out_color[y, x, 0] += w * c0
                out_color[y, x, 1] += w * c1
                out_color[y, x, 2] += w * c2
                out_alpha[y, x] += w
                out_depth[y, x] += w * z
                trans[y, x] = t * (1.0 - alpha)
                last_idx[y, x] = i

    return out_color_arr, out_alpha_arr, out_depth_arr, trans_arr, last_idx_arr


def composite_backward(double[:, ::1] mu, double[:, ::1] conic,
                       double[::1] opac, double[:, ::1] color,
                       long[:, ::1] bbox, int width, int height,
                       double power_cutoff, double alpha_min,
                       double[:, ::1] final_T, long[:, ::1] last_idx,
                       double[:, :, ::1] grad_color):
    cdef int n = mu.shape[0]
    d_mu_arr = np.zeros((n, 2))
    d_conic_arr = np.zeros((n, 3))
    d_opac_arr = np.zeros(n)
    d_color_arr = np.zeros((n, 3))
    trans_arr = np.array(final_T, copy=True)
    suffix_arr = np.zeros((height, width, 3))

    cdef double[:, ::1] d_mu = d_mu_arr
    cdef double[:, ::1] d_conic = d_conic_arr
    cdef double[::1] d_opac = d_opac_arr
    cdef double[:, ::1] d_color = d_color_arr
    cdef double[:, ::1] trans = trans_arr
    cdef double[:, :, ::1] suffix = suffix_arr

    cdef int i, x, y, x0, x1, y0, y1
    cdef double a, b, c, o, mx, my, c0, c1, c2
    cdef double dx, dy, q, g, raw, alpha, one_m, t_here, w
    cdef double g0, g1, g2, d_alpha, dq
    cdef bint clamped

    for i in range(n - 1, -1, -1):
        x0 = <int>bbox[i, 0]; x1 = <int>bbox[i, 1]
        y0 = <int>bbox[i, 2]; y1 = <int>bbox[i, 3]
        if x1 <= x0 or y1 <= y0:
            continue
        a = conic[i, 0]; b = conic[i, 1]; c = conic[i, 2]
        o = opac[i]; mx = mu[i, 0]; my = mu[i, 1]
        c0 = color[i, 0]; c1 = color[i, 1]; c2 = color[i, 2]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                if last_idx[y, x] < i:
                    continue
                dx = x - mx
                q = 0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
                if q > power_cutoff:
                    continue
                g = exp(-q)
                raw = o * g
                clamped = raw > ALPHA_CLAMP
                alpha = ALPHA_CLAMP if clamped else raw
                if alpha < alpha_min:
                    continue
                one_m = 1.0 - alpha
                t_here = trans[y, x] / one_m
                w = alpha * t_here
                g0 = grad_color[y, x, 0]
                g1 = grad_color[y, x, 1]
                g2 = grad_color[y, x, 2]

                d_color[i, 0] += w * g0
                d_color[i, 1] += w * g1
                d_color[i, 2] += w * g2

                if not clamped:
                    d_alpha = (g0 * (t_here * c0 - suffix[y, x, 0] / one_m)
                               + g1 * (t_here * c1 - suffix[y, x, 1] / one_m)
                               + g2 * (t_here * c2 - suffix[y, x, 2] / one_m))
                    d_opac[i] += d_alpha * g
                    dq = -d_alpha * alpha
                    d_conic[i, 0] += dq * 0.5 * dx * dx
                    d_conic[i, 1] += dq * dx * dy
                    d_conic[i, 2] += dq * 0.5 * dy * dy
                    d_mu[i, 0] += -dq * (a * dx + b * dy)
                    d_mu[i, 1] += -dq * (b * dx + c * dy)

                suffix[y, x, 0] += w * c0
                suffix[y, x, 1] += w * c1
                suffix[y, x, 2] += w * c2
                trans[y, x] = t_here

    return d_mu_arr, d_conic_arr, d_opac_arr, d_color_arr


def composite_scalar(double[:, ::1] mu, double[:, ::1] conic,
                     double[::1] opac, double[::1] value,
                     long[:, ::1] bbox, int width, int height,
                     double power_cutoff, double alpha_min, double t_term):
    cdef int n = mu.shape[0]
    out_val_arr = np.zeros((height, width))
    out_alpha_arr = np.zeros((height, width))
    trans_arr = np.ones((height, width))

    cdef double[:, ::1] out_val = out_val_arr
    cdef double[:, ::1] out_alpha = out_alpha_arr
    cdef double[:, ::1] trans = trans_arr

    cdef int i, x, y, x0, x1, y0, y1
    cdef double a, b, c, o, mx, my, v
    cdef double dx, dy, q, alpha, t, w

    for i in range(n):
        x0 = <int>bbox[i, 0]; x1 = <int>bbox[i, 1]
        y0 = <int>bbox[i, 2]; y1 = <int>bbox[i, 3]
        if x1 <= x0 or y1 <= y0:
            continue
        a = conic[i, 0]; b = conic[i, 1]; c = conic[i, 2]
        o = opac[i]; mx = mu[i, 0]; my = mu[i, 1]; v = value[i]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                dx = x - mx
                q = 0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
                if q > power_cutoff:
                    continue
                alpha = o * exp(-q)
                if alpha > ALPHA_CLAMP:
                    alpha = ALPHA_CLAMP
                if alpha < alpha_min:
                    continue
                t = trans[y, x]
                if t < t_term:
                    continue
                w = alpha * t
                out_val[y, x] += w * v
                out_alpha[y, x] += w
                trans[y, x] = t * (1.0 - alpha)

    return out_val_arr, out_alpha_arr


def accumulate_support(double[:, ::1] mu, double[:, ::1] conic,
                       double[::1] opac, long[:, ::1] bbox,
                       int width, int height,
                       double power_cutoff, double alpha_min, double t_term,
                       double w_min,
                       double[:, ::1] map_a, double[:, ::1] map_b):
    cdef int n = mu.shape[0]
    sum_a_arr = np.zeros(n)
    sum_b_arr = np.zeros(n)
    trans_arr = np.ones((height, width))

    cdef double[::1] sum_a = sum_a_arr
    cdef double[::1] sum_b = sum_b_arr
    cdef double[:, ::1] trans = trans_arr

    cdef int i, x, y, x0, x1, y0, y1
    cdef double a, b, c, o, mx, my
    cdef double dx, dy, q, alpha, t, w

    for i in range(n):
        x0 = <int>bbox[i, 0]; x1 = <int>bbox[i, 1]
        y0 = <int>bbox[i, 2]; y1 = <int>bbox[i, 3]
        if x1 <= x0 or y1 <= y0:
            continue
        a = conic[i, 0]; b = conic[i, 1]; c = conic[i, 2]
        o = opac[i]; mx = mu[i, 0]; my = mu[i, 1]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                dx = x - mx
                q = 0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
                if q > power_cutoff:
                    continue
                alpha = o * exp(-q)
                if alpha > ALPHA_CLAMP:
                    alpha = ALPHA_CLAMP
                if alpha < alpha_min:
                    continue
                t = trans[y, x]
                if t < t_term:
                    continue
                w = alpha * t
                if w > w_min:
                    sum_a[i] += map_a[y, x]
                    sum_b[i] += map_b[y, x]
                trans[y, x] = t * (1.0 - alpha)

    return sum_a_arr, sum_b_arr
