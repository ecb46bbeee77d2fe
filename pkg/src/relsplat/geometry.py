"""Pinhole camera model, point/covariance projection and screen radii.

Conventions: world-to-camera is x_c = R @ p + t with x right, y down,
z forward; pixel (iy, ix) is sampled at continuous image coordinates
(u=ix, v=iy).  All math is float64.
"""

import json
from dataclasses import dataclass

import numpy as np

NEAR_DEFAULT = 1e-3
COV_FLOOR = 0.3  # px^2 low-pass floor added to both diagonal entries


@dataclass
class Camera:
    """Pinhole intrinsics plus a rigid world-to-camera transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray   # (3,3) world-to-camera
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the raster")
        rtr = self.rotation @ self.rotation.T
        if not np.allclose(rtr, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(self.rotation), 1.0, atol=1e-9):
            raise ValueError("rotation determinant is not +1")

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                   width=d["width"], height=d["height"],
                   rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
                   translation=np.array(d["translation"], dtype=np.float64))


def save_rig(path, cameras):
    with open(path, "w") as f:
        json.dump([c.to_dict() for c in cameras], f, indent=1)


def load_rig(path):
    with open(path) as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = [data]
    return [Camera.from_dict(d) for d in data]


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_rot(q):
    """Unit quaternion(s) (w, x, y, z) to rotation matrices, shape (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def project_point(camera, p, near=NEAR_DEFAULT):
    """Project a world point; returns (u, v, depth) or None if behind camera."""
    pc = camera.rotation @ np.asarray(p, dtype=np.float64) + camera.translation
    if pc[2] <= near:
        return None
    u = camera.fx * pc[0] / pc[2] + camera.cx
    v = camera.fy * pc[1] / pc[2] + camera.cy
    return u, v, pc[2]


def project_points(camera, pts, near=NEAR_DEFAULT):
    """Vectorized projection. Returns (uv (N,2), depth (N,), in_front (N,) bool)."""
    pc = pts @ camera.rotation.T + camera.translation
    z = pc[:, 2]
    in_front = z > near
    zs = np.where(in_front, z, 1.0)
    uv = np.stack([camera.fx * pc[:, 0] / zs + camera.cx,
                   camera.fy * pc[:, 1] / zs + camera.cy], axis=1)
    return uv, z, in_front


def perspective_jacobians(camera, pc):
    """2x3 Jacobians of (u, v) wrt camera-space points pc (N,3)."""
    n = pc.shape[0]
    tx, ty, tz = pc[:, 0], pc[:, 1], pc[:, 2]
    j = np.zeros((n, 2, 3))
    j[:, 0, 0] = camera.fx / tz
    j[:, 0, 2] = -camera.fx * tx / (tz * tz)
    j[:, 1, 1] = camera.fy / tz
    j[:, 1, 2] = -camera.fy * ty / (tz * tz)
    return j


def covariance3d(log_scale, rotation_q):
    """World-space 3x3 covariances R diag(exp(2s)) R^T for (N,...) inputs."""
    rq = quat_normalize(np.atleast_2d(rotation_q))
    ls = np.atleast_2d(log_scale)
    r = quat_to_rot(rq)
    d = np.exp(2.0 * ls)
    return np.einsum('nij,nj,nkj->nik', r, d, r)


def project_covariances(camera, pc, cov3d, floor=COV_FLOOR):
    """Screen-space 2x2 covariances at camera-space means pc.

    Sigma_2D = J W Sigma_3D W^T J^T with the perspective Jacobian evaluated
    at the mean, plus `floor` added to both diagonal entries.
    Returns (N, 2, 2).
    """
    w = camera.rotation
    m = np.einsum('ij,njk,lk->nil', w, cov3d, w)
    j = perspective_jacobians(camera, pc)
    cov2d = np.einsum('nab,nbc,ndc->nad', j, m, j)
    cov2d[:, 0, 0] += floor
    cov2d[:, 1, 1] += floor
    return cov2d


def project_covariance(camera, position, log_scale, rotation_q, floor=COV_FLOOR):
    """Single-Gaussian convenience wrapper; requires the point in front."""
    pc = camera.rotation @ np.asarray(position, dtype=np.float64) + camera.translation
    cov3d = covariance3d(np.asarray(log_scale)[None], np.asarray(rotation_q)[None])
    return project_covariances(camera, pc[None], cov3d, floor=floor)[0]


def cov2d_eigvals(cov):
    """Closed-form eigenvalues of symmetric 2x2 matrices, (..., 2) ascending."""
    cov = np.asarray(cov, dtype=np.float64)
    a = cov[..., 0, 0]
    b = cov[..., 0, 1]
    c = cov[..., 1, 1]
    mid = 0.5 * (a + c)
    rad = np.sqrt(np.maximum(0.0, (0.5 * (a - c)) ** 2 + b * b))
    return np.stack([mid - rad, mid + rad], axis=-1)


def screen_radius(cov):
    """3-sigma screen radius from the larger eigenvalue; works on (...,2,2)."""
    lam = cov2d_eigvals(cov)
    return 3.0 * np.sqrt(np.maximum(0.0, lam[..., 1]))


def visibility(camera, uv, depth, radius, near=NEAR_DEFAULT):
    """Depth > near and projected mean inside the raster grown by the radius."""
    return ((depth > near)
            & (uv[:, 0] >= -radius) & (uv[:, 0] <= camera.width - 1 + radius)
            & (uv[:, 1] >= -radius) & (uv[:, 1] <= camera.height - 1 + radius))
