"""Reliability-aware densification.

Each Gaussian gets a score S = (U_bar * F_bar * H_bar)^(1/3): demand U,
injection-weighted unresolved spectral residual F over its visible support,
and the screen-space gradient statistic H, each min-max normalized over the
population.  High-scoring large Gaussians split, small ones clone; low
opacity prunes.  A gradient-threshold-only mode reproduces classic
densification (used during LR pretraining and as an ablation).
"""

from dataclasses import dataclass

import numpy as np

from .geometry import quat_to_rot
from .renderer import DEFAULT_SETTINGS, support_sums

EPS = 1e-6


@dataclass
class DensifyPolicy:
    score_threshold: float = 0.5
    split_size_threshold: float = 20.0  # px, max screen radius over views
    densify_interval: int = 100
    densify_start: int = 500
    densify_stop: int = 15000
    prune_opacity: float = 0.005
    split_children: int = 2
    split_scale_shrink: float = 1.6
    max_gaussians: int = 200_000
    grad_threshold: float = 2e-7  # gradient-mode candidate cutoff
    clone_offset: float = 0.01    # x parent scale, along accumulated grad

    def __post_init__(self):
        if self.densify_start >= self.densify_stop:
            raise ValueError("densify_start must precede densify_stop")
        if self.split_children < 2:
            raise ValueError("split_children must be >= 2")


def population_normalize(x, eps=EPS):
    """Min-max over the population; constant vectors map to all zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min()
    hi = x.max()
    return (x - lo) / (hi - lo + eps)


def residual_terms(model, cameras, m_maps, gamma_maps,
                   settings=DEFAULT_SETTINGS, w_min=1.0 / 255.0, eps=EPS):
    """F_i and its raw sums over all views' support regions.

    F_i = sum_t sum_{p in support} M_t(p)*Gamma_t(p)
          / (sum_t sum_{p in support} M_t(p) + eps)
    """
    n = len(model)
    num = np.zeros(n)
    den = np.zeros(n)
    for cam, m, gamma in zip(cameras, m_maps, gamma_maps):
        a, b = support_sums(model, cam, m * gamma, m, settings, w_min)
        num += a
        den += b
    return num / (den + eps), num, den


def residual_from_sums(num, den, eps=EPS):
    return num / (den + eps)


def gradient_term(grad_norm_sum, obs_count):
    """H_i: mean screen-space gradient norm since the last event."""
    return np.asarray(grad_norm_sum) / np.maximum(np.asarray(obs_count), 1)


def densify_score(u, f, h, eps=EPS):
    """S = (U_bar * F_bar * H_bar)^(1/3) with population min-max bars."""
    ub = population_normalize(u, eps)
    fb = population_normalize(f, eps)
    hb = population_normalize(h, eps)
    return np.cbrt(ub * fb * hb)


@dataclass
class DensifyEvent:
    splits: int
    clones: int
    pruned: int
    population: int
    keep_actions: np.ndarray  # mask applied before appending children
    n_added: int
    keep_prune: np.ndarray    # mask applied after appending


def apply_densification(model, scores, policy, radii_max, rng,
                        score_threshold=None):
    """Clone/split high-scoring Gaussians, then prune transparent ones.

    radii_max is each Gaussian's maximum screen radius over the training
    views; rng drives split sampling.  Returns a DensifyEvent whose masks
    let the optimizer mirror the model surgery.
    """
    n = len(model)
    threshold = policy.score_threshold if score_threshold is None else score_threshold
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.nonzero(scores > threshold)[0]

    room = policy.max_gaussians - n
    if len(candidates) > max(room, 0):
        # each action nets +1 Gaussian; act on the top scorers only
        order = np.argsort(-scores[candidates], kind="stable")
        candidates = candidates[order[:max(room, 0)]]
        candidates = np.sort(candidates)

    split_ids = [i for i in candidates if radii_max[i] > policy.split_size_threshold]
    clone_ids = [i for i in candidates if radii_max[i] <= policy.split_size_threshold]

    new_pos, new_ls, new_rot, new_op, new_col, new_dem = [], [], [], [], [], []

    for i in split_ids:
        r3 = quat_to_rot(model.rotations[i][None])[0]
        scale = np.exp(model.log_scales[i])
        child_ls = model.log_scales[i] - np.log(policy.split_scale_shrink)
        for _ in range(policy.split_children):
            sample = np.array(rng.normals(3))
            pos = model.positions[i] + r3 @ (scale * sample)
            new_pos.append(pos)
            new_ls.append(child_ls)
            new_rot.append(model.rotations[i])
            new_op.append(model.opacity_logits[i])
            new_col.append(model.colors[i])
            new_dem.append(model.demand[i])

    for i in clone_ids:
        g = model.grad_pos_sum[i]
        gn = np.linalg.norm(g)
        offset = np.zeros(3)
        if gn > 0:
            offset = policy.clone_offset * np.exp(model.log_scales[i]).mean() * g / gn
        new_pos.append(model.positions[i] + offset)
        new_ls.append(model.log_scales[i])
        new_rot.append(model.rotations[i])
        new_op.append(model.opacity_logits[i])
        new_col.append(model.colors[i])
        new_dem.append(model.demand[i])

    keep_actions = np.ones(n, dtype=bool)
    keep_actions[split_ids] = False  # split parents are removed
    model.keep(keep_actions)
    n_added = len(new_pos)
    if n_added:
        model.append(np.array(new_pos), np.array(new_ls), np.array(new_rot),
                     np.array(new_op), np.array(new_col), np.array(new_dem))

    keep_prune = model.opacities >= policy.prune_opacity
    pruned = int((~keep_prune).sum())
    model.keep(keep_prune)

    return DensifyEvent(splits=len(split_ids), clones=len(clone_ids),
                        pruned=pruned, population=len(model),
                        keep_actions=keep_actions, n_added=n_added,
                        keep_prune=keep_prune)
