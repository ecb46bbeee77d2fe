"""Gaussian scene model: parameter arrays, activations, checkpoint format.

Parameters are stored structure-of-arrays in float64.  Per-Gaussian training
statistics (screen-gradient accumulators, observation counts and the
map-refresh residual sums used by densification) live alongside the
parameters and are not serialized.
"""

import struct

import numpy as np

from .geometry import quat_normalize

CKPT_MAGIC = b"CFGS"
CKPT_VERSION = 1
FIELDS_PER_GAUSSIAN = 14  # position 3, log_scale 3, rotation_q 4, opacity_logit 1, color 3

PARAM_GROUPS = ("positions", "log_scales", "rotations", "opacity_logits", "colors")

LOG_SCALE_MIN = -14.0
LOG_SCALE_MAX = 6.0


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def inverse_sigmoid(y):
    y = np.asarray(y, dtype=np.float64)
    return np.log(y / (1.0 - y))


class GaussianModel:
    """A set of anisotropic 3D Gaussians with accumulated training stats."""

    def __init__(self, positions, log_scales, rotations, opacity_logits, colors):
        self.positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        self.log_scales = np.atleast_2d(np.asarray(log_scales, dtype=np.float64))
        self.rotations = quat_normalize(np.atleast_2d(np.asarray(rotations, dtype=np.float64)))
        self.opacity_logits = np.atleast_1d(np.asarray(opacity_logits, dtype=np.float64))
        self.colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
        n = len(self.positions)
        if not (len(self.log_scales) == len(self.rotations)
                == len(self.opacity_logits) == len(self.colors) == n):
            raise ValueError("parameter arrays disagree on the Gaussian count")
        self.demand = np.ones(n)  # per-Gaussian demand score d_i, refreshed during training
        self.reset_stats()

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)),
                   np.zeros(0), np.zeros((0, 3)))

    def __len__(self):
        return len(self.positions)

    # -- activations ---------------------------------------------------

    @property
    def opacities(self):
        return sigmoid(self.opacity_logits)

    @property
    def scales(self):
        return np.exp(self.log_scales)

    # -- stats ---------------------------------------------------------

    def reset_stats(self):
        n = len(self)
        self.grad_norm_sum = np.zeros(n)
        self.grad_pos_sum = np.zeros((n, 3))
        self.obs_count = np.zeros(n, dtype=np.int64)
        self.residual_sum = np.zeros(n)
        self.mask_sum = np.zeros(n)

    def reset_grad_stats(self):
        """Counters consumed by the gradient term; cleared after densification."""
        self.grad_norm_sum[:] = 0.0
        self.grad_pos_sum[:] = 0.0
        self.obs_count[:] = 0

    def normalize_rotations(self):
        self.rotations = quat_normalize(self.rotations)

    def clamp_parameters(self):
        """Project parameters back onto their invariant sets after a step."""
        self.normalize_rotations()
        np.clip(self.colors, 0.0, 1.0, out=self.colors)
        np.clip(self.log_scales, LOG_SCALE_MIN, LOG_SCALE_MAX, out=self.log_scales)

    # -- selection / growth ---------------------------------------------

    def keep(self, mask):
        """Drop Gaussians where mask is False (stats follow)."""
        self.positions = self.positions[mask]
        self.log_scales = self.log_scales[mask]
        self.rotations = self.rotations[mask]
        self.opacity_logits = self.opacity_logits[mask]
        self.colors = self.colors[mask]
        self.demand = self.demand[mask]
        self.grad_norm_sum = self.grad_norm_sum[mask]
        self.grad_pos_sum = self.grad_pos_sum[mask]
        self.obs_count = self.obs_count[mask]
        self.residual_sum = self.residual_sum[mask]
        self.mask_sum = self.mask_sum[mask]

    def append(self, positions, log_scales, rotations, opacity_logits, colors, demand):
        """Add Gaussians with zeroed stats; demand is inherited from parents."""
        k = len(positions)
        self.positions = np.concatenate([self.positions, positions])
        self.log_scales = np.concatenate([self.log_scales, log_scales])
        self.rotations = np.concatenate([self.rotations, quat_normalize(rotations)])
        self.opacity_logits = np.concatenate([self.opacity_logits, opacity_logits])
        self.colors = np.concatenate([self.colors, colors])
        self.demand = np.concatenate([self.demand, demand])
        self.grad_norm_sum = np.concatenate([self.grad_norm_sum, np.zeros(k)])
        self.grad_pos_sum = np.concatenate([self.grad_pos_sum, np.zeros((k, 3))])
        self.obs_count = np.concatenate([self.obs_count, np.zeros(k, dtype=np.int64)])
        self.residual_sum = np.concatenate([self.residual_sum, np.zeros(k)])
        self.mask_sum = np.concatenate([self.mask_sum, np.zeros(k)])

    def copy(self):
        m = GaussianModel(self.positions.copy(), self.log_scales.copy(),
                          self.rotations.copy(), self.opacity_logits.copy(),
                          self.colors.copy())
        m.demand = self.demand.copy()
        m.grad_norm_sum = self.grad_norm_sum.copy()
        m.grad_pos_sum = self.grad_pos_sum.copy()
        m.obs_count = self.obs_count.copy()
        m.residual_sum = self.residual_sum.copy()
        m.mask_sum = self.mask_sum.copy()
        return m


def save_checkpoint(path, model):
    """Binary checkpoint: magic 'CFGS', version u32, count u64, then
    14 little-endian f32 fields per Gaussian in declaration order."""
    n = len(model)
    rec = np.empty((n, FIELDS_PER_GAUSSIAN), dtype="<f4")
    rec[:, 0:3] = model.positions
    rec[:, 3:6] = model.log_scales
    rec[:, 6:10] = model.rotations
    rec[:, 10] = model.opacity_logits
    rec[:, 11:14] = model.colors
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<Q", n))
        f.write(rec.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CKPT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (n,) = struct.unpack("<Q", f.read(8))
        rec = np.frombuffer(f.read(n * FIELDS_PER_GAUSSIAN * 4), dtype="<f4")
    rec = rec.reshape(n, FIELDS_PER_GAUSSIAN).astype(np.float64)
    return GaussianModel(rec[:, 0:3], rec[:, 3:6], rec[:, 6:10],
                         rec[:, 10], rec[:, 11:14])
