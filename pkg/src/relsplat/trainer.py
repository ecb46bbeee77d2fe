"""Training loop: LR pretraining, map-refresh orchestration, the composite
objective, per-group adaptive-moment stepping and densification scheduling.

Phase A (iterations 0..pretrain) optimizes the low-resolution reconstruction
loss only, with classic gradient-statistic densification.  Phase B computes
demand scores, refreshes the per-view map bundle on a fixed cadence and adds
selective SR supervision plus the scheduled spectral losses, with
reliability-aware densification.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .demand import DemandParams, compute_demand, per_view_radii
from .densify import (DensifyPolicy, apply_densification, densify_score,
                      gradient_term, residual_from_sums)
from .freqreg import FreqSchedule, amplitude_loss, phase_loss, schedule, select_patches
from .imgio import save_pfm
from .metrics import psnr
from .model import GaussianModel, inverse_sigmoid, save_checkpoint
from .reliability import HighpassParams, build_view_maps, edge_support, highpass
from .renderer import (RenderSettings, downsample, downsample_backward,
                       render, render_backward, support_sums)
from .rng import Xoshiro256StarStar

EPS = 1e-6


@dataclass
class OptimizerParams:
    lr_position: float = 2e-4
    lr_log_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 5e-2
    lr_color: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    position_lr_final_ratio: float = 0.01  # exponential decay target


@dataclass
class TrainConfig:
    iterations: int = 20000
    pretrain_iterations: int = 3000
    lambda_lr: float = 1.0
    lambda_sr: float = 1.0
    freq: FreqSchedule = field(default_factory=FreqSchedule)
    demand: DemandParams = field(default_factory=DemandParams)
    highpass: HighpassParams = field(default_factory=HighpassParams)
    densify: DensifyPolicy = field(default_factory=DensifyPolicy)
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)
    render: RenderSettings = field(default_factory=RenderSettings)
    neighbor_count: int = 2
    map_refresh_interval: int = 500
    demand_refresh_interval: int = 1000
    seed: int = 0
    n_init: int = 2000
    init_extent: float = 0.0        # 0 -> take from the dataset
    densify_mode: str = "score"     # "score" | "gradient"
    m_override_one: bool = False    # ablation: uniform injection map
    residual_variant: str = "fourier"  # "fourier" | "sobel" (G_t ablation)
    force_u_one: bool = False
    force_f_one: bool = False
    force_h_one: bool = False
    checkpoint_interval: int = 5000
    metrics_interval: int = 100


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def _fill_dataclass(obj, data):
    for key, val in data.items():
        if not hasattr(obj, key):
            raise KeyError(f"unknown config key {key!r}")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur) and isinstance(val, dict):
            if getattr(type(cur), "__dataclass_params__").frozen:
                setattr(obj, key, replace(cur, **val))
            else:
                _fill_dataclass(cur, val)
        else:
            setattr(obj, key, val)
    return obj


def config_from_dict(data):
    return _fill_dataclass(TrainConfig(), dict(data))


def load_config(path):
    with open(path) as f:
        return config_from_dict(json.load(f))


PARAM_LR_KEYS = {
    "positions": "lr_position",
    "log_scales": "lr_log_scale",
    "rotations": "lr_rotation",
    "opacity_logits": "lr_opacity",
    "colors": "lr_color",
}


class AdamGroups:
    """Adaptive-moment optimizer with one step size per parameter group."""

    def __init__(self, model, params, total_iterations):
        self.params = params
        self.total = max(total_iterations, 1)
        self.t = 0
        self.m = {k: np.zeros_like(getattr(model, k)) for k in PARAM_LR_KEYS}
        self.v = {k: np.zeros_like(getattr(model, k)) for k in PARAM_LR_KEYS}

    def _lr(self, name, it):
        base = getattr(self.params, PARAM_LR_KEYS[name])
        if name == "positions" and self.params.position_lr_final_ratio < 1.0:
            return base * self.params.position_lr_final_ratio ** (it / self.total)
        return base

    def step(self, model, grads, it=0):
        """One update; returns the number of non-finite gradient entries
        (zeroed before use)."""
        self.t += 1
        b1, b2 = self.params.beta1, self.params.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        bad_total = 0
        for name in PARAM_LR_KEYS:
            g = np.asarray(getattr(grads, name), dtype=np.float64)
            bad = ~np.isfinite(g)
            if bad.any():
                g = np.where(bad, 0.0, g)
                bad_total += int(bad.sum())
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (self._lr(name, it) / bc1) * m / (np.sqrt(v / bc2) + self.params.eps)
            getattr(model, name)[...] -= update
        return bad_total

    def apply_surgery(self, event):
        """Mirror a densification event: moments follow survivors, zeros
        for children."""
        for store in (self.m, self.v):
            for name in store:
                arr = store[name][event.keep_actions]
                if event.n_added:
                    pad = np.zeros((event.n_added,) + arr.shape[1:])
                    arr = np.concatenate([arr, pad])
                store[name] = arr[event.keep_prune]


def loss_lr(render_color, lr_image, factor):
    """Mean L1 between the block-mean downsampled render and the LR image."""
    down = downsample(render_color, factor)
    if down.shape != lr_image.shape:
        raise ValueError(f"LR size mismatch: {down.shape} vs {lr_image.shape}")
    diff = down - lr_image
    loss = float(np.mean(np.abs(diff)))
    grad = downsample_backward(np.sign(diff) / diff.size, factor)
    return loss, grad


def loss_sr_selective(render_color, sr_image, m, eps=EPS):
    """Injection-map-weighted mean of per-pixel channel-mean L1."""
    diff = render_color - sr_image
    msum = float(m.sum()) + eps
    loss = float(np.sum(m * np.mean(np.abs(diff), axis=2)) / msum)
    grad = m[:, :, None] * np.sign(diff) / (3.0 * msum)
    return loss, grad


def init_model(dataset, config, rng):
    """Seeded uniform point cloud inside the scene bounding box."""
    extent = config.init_extent or getattr(dataset, "extent", 0.0)
    if not extent:
        centers = np.stack([c.center for c in dataset.cameras])
        extent = 0.4 * float(np.linalg.norm(centers, axis=1).mean())
    n = config.n_init
    pos = np.array([[rng.uniform(-extent, extent) for _ in range(3)]
                    for _ in range(n)])
    base_scale = 1.6 * extent / max(n, 1) ** (1.0 / 3.0)
    log_scales = np.full((n, 3), np.log(base_scale))
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    opacity = np.full(n, inverse_sigmoid(0.1))
    colors = np.array([[0.4 + 0.2 * rng.random() for _ in range(3)]
                       for _ in range(n)])
    return GaussianModel(pos, log_scales, rotations, opacity, colors)


METRIC_COLUMNS = ("iter", "L_lr", "L_sr", "L_amp", "L_ph", "population",
                  "PSNR_train")


class Trainer:
    def __init__(self, dataset, config, out_dir=None, initial_model=None,
                 dump_spectra=False):
        self.data = dataset
        self.cfg = config
        self.out_dir = out_dir
        self.dump_spectra = dump_spectra
        self.rng = Xoshiro256StarStar(config.seed)
        self.model = initial_model if initial_model is not None \
            else init_model(dataset, config, self.rng)
        self.opt = AdamGroups(self.model, config.optimizer, config.iterations)
        self.maps = None
        self.patches = None
        self.edge_maps = None
        self.hf_sr = None
        self.history = []
        self.events = []
        self.nonfinite_streak = 0
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "metrics.csv"), "w") as f:
                f.write(",".join(METRIC_COLUMNS) + "\n")
            open(os.path.join(out_dir, "events.jsonl"), "w").close()

    # -- map orchestration ----------------------------------------------

    def _ensure_static_maps(self):
        if self.edge_maps is None:
            self.edge_maps = [edge_support(sr) for sr in self.data.sr]
            self.hf_sr = [highpass(sr, self.cfg.highpass) for sr in self.data.sr]

    def refresh_maps(self, it):
        self._ensure_static_maps()
        maps, renders = build_view_maps(
            self.model, self.data.cameras, self.data.sr, self.model.demand,
            self.cfg.highpass, self.cfg.neighbor_count, self.cfg.render,
            edge_maps=self.edge_maps, hf_sr=self.hf_sr,
            m_override_one=self.cfg.m_override_one,
            residual_variant=self.cfg.residual_variant)
        self.maps = maps
        # injection-weighted residual support sums feeding the F term
        num = np.zeros(len(self.model))
        den = np.zeros(len(self.model))
        for cam, vm in zip(self.data.cameras, maps):
            a, b = support_sums(self.model, cam, vm.M * vm.G, vm.M,
                                self.cfg.render)
            num += a
            den += b
        self.model.residual_sum = num
        self.model.mask_sum = den
        k = self.cfg.freq.patch_count
        p = self.cfg.freq.patch_size
        self.patches = [select_patches(vm.M, k, p) for vm in maps]
        if self.dump_spectra and self.out_dir:
            self._dump_spectra(it, renders)

    def _dump_spectra(self, it, renders):
        spec_dir = os.path.join(self.out_dir, "spectra")
        os.makedirs(spec_dir, exist_ok=True)
        p = self.cfg.freq.patch_size
        for t, patches in enumerate(self.patches):
            for k, patch in enumerate(patches):
                for tag, img in (("render", renders[t].color),
                                 ("sr", self.data.sr[t])):
                    sub = img[patch.y:patch.y + p, patch.x:patch.x + p]
                    spec = np.abs(np.fft.fftshift(np.fft.fft2(
                        sub.mean(axis=2) * patch.weight)))
                    save_pfm(os.path.join(
                        spec_dir, f"it{it:06d}_v{t}_p{k}_{tag}.pfm"), spec)

    # -- objective --------------------------------------------------------

    def compute_losses(self, out, view, it):
        """Scalar terms and the combined per-pixel color gradient."""
        cfg = self.cfg
        upstream = np.zeros_like(out.color)
        vals = {"L_lr": 0.0, "L_sr": 0.0, "L_amp": 0.0, "L_ph": 0.0}

        if cfg.lambda_lr > 0:
            l, g = loss_lr(out.color, self.data.lr[view], self.data.factor)
            vals["L_lr"] = l
            upstream += cfg.lambda_lr * g

        in_phase_b = it >= cfg.pretrain_iterations and self.maps is not None
        if in_phase_b and cfg.lambda_sr > 0:
            l, g = loss_sr_selective(out.color, self.data.sr[view],
                                     self.maps[view].M)
            vals["L_sr"] = l
            upstream += cfg.lambda_sr * g

        if in_phase_b and self.patches is not None:
            sp = schedule(cfg.freq, it)
            patches = self.patches[view]
            psize = cfg.freq.patch_size
            if patches and sp.lambda_amp > 0:
                acc = 0.0
                for patch in patches:
                    sl = (slice(patch.y, patch.y + psize),
                          slice(patch.x, patch.x + psize))
                    l, g = amplitude_loss(out.color[sl], self.data.sr[view][sl],
                                          patch.weight, sp.radius, sp.w_high)
                    acc += l
                    upstream[sl] += sp.lambda_amp * g / len(patches)
                vals["L_amp"] = acc / len(patches)
            if patches and sp.lambda_ph > 0:
                acc = 0.0
                for patch in patches:
                    sl = (slice(patch.y, patch.y + psize),
                          slice(patch.x, patch.x + psize))
                    l, g = phase_loss(out.color[sl], self.data.sr[view][sl],
                                      patch.weight, sp.radius,
                                      cfg.freq.support_threshold)
                    acc += l
                    upstream[sl] += sp.lambda_ph * g / len(patches)
                vals["L_ph"] = acc / len(patches)
        return vals, upstream

    # -- densification ------------------------------------------------------

    def densify_event(self, it):
        cfg = self.cfg
        policy = cfg.densify
        radii, vis = per_view_radii(self.model, self.data.cameras, cfg.render)
        radii_max = np.where(vis, radii, 0.0).max(axis=0)
        h = gradient_term(self.model.grad_norm_sum, self.model.obs_count)
        use_score = (it >= cfg.pretrain_iterations
                     and cfg.densify_mode == "score"
                     and self.maps is not None)
        if use_score:
            n = len(self.model)
            u = np.ones(n) if cfg.force_u_one else self.model.demand
            f = np.ones(n) if cfg.force_f_one else residual_from_sums(
                self.model.residual_sum, self.model.mask_sum)
            hh = np.ones(n) if cfg.force_h_one else h
            scores = densify_score(u, f, hh)
            threshold = policy.score_threshold
        else:
            scores = h
            threshold = policy.grad_threshold
        event = apply_densification(self.model, scores, policy, radii_max,
                                    self.rng, score_threshold=threshold)
        self.opt.apply_surgery(event)
        self.model.reset_grad_stats()
        record = {"iter": it, "splits": event.splits, "clones": event.clones,
                  "pruned": event.pruned, "population": event.population}
        self.events.append(record)
        if self.out_dir:
            with open(os.path.join(self.out_dir, "events.jsonl"), "a") as fh:
                fh.write(json.dumps(record) + "\n")

    # -- loop ---------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        n_views = len(self.data.cameras)
        for it in range(cfg.iterations):
            if it >= cfg.pretrain_iterations:
                since = it - cfg.pretrain_iterations
                if since % cfg.demand_refresh_interval == 0:
                    self.model.demand = compute_demand(
                        self.model, self.data.cameras, cfg.demand, cfg.render)
                if since % cfg.map_refresh_interval == 0:
                    self.refresh_maps(it)

            view = it % n_views
            out = render(self.model, self.data.cameras[view], cfg.render)
            vals, upstream = self.compute_losses(out, view, it)
            grads = render_backward(self.model, self.data.cameras[view],
                                    upstream, cfg.render, out=out,
                                    accumulate_stats=True)
            bad = self.opt.step(self.model, grads, it)
            self.model.clamp_parameters()

            n_params = 14 * max(len(self.model), 1)
            if bad > 0.01 * n_params:
                self.nonfinite_streak += 1
                if self.nonfinite_streak >= 100:
                    raise RuntimeError(
                        f"aborting at iteration {it}: {bad}/{n_params} "
                        f"non-finite gradient entries for "
                        f"{self.nonfinite_streak} consecutive steps")
            else:
                self.nonfinite_streak = 0

            if it % cfg.metrics_interval == 0:
                ref = self.data.gt[view] if self.data.gt is not None \
                    else self.data.sr[view]
                row = {"iter": it, **vals, "population": len(self.model),
                       "PSNR_train": psnr(out.color, ref)}
                self.history.append(row)
                if self.out_dir:
                    with open(os.path.join(self.out_dir, "metrics.csv"), "a") as fh:
                        fh.write(",".join(_fmt(row[c]) for c in METRIC_COLUMNS)
                                 + "\n")

            if (cfg.densify.densify_start <= it <= cfg.densify.densify_stop
                    and it > 0 and it % cfg.densify.densify_interval == 0):
                self.densify_event(it)

            if self.out_dir and (it + 1) % cfg.checkpoint_interval == 0:
                save_checkpoint(os.path.join(
                    self.out_dir, f"ckpt_{it + 1:06d}.cfgs"), self.model)

        if self.out_dir:
            save_checkpoint(os.path.join(self.out_dir, "ckpt_final.cfgs"),
                            self.model)
        return self.model, self.history


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.8g}"
    return str(v)


def train(dataset, config, out_dir=None, initial_model=None,
          dump_spectra=False):
    """Run the full optimization; returns (model, metric history)."""
    return Trainer(dataset, config, out_dir=out_dir,
                   initial_model=initial_model,
                   dump_spectra=dump_spectra).run()
