"""Synthetic multi-view scenes and datasets.

Scenes are built from seeded Gaussian primitives (a smooth textured floor
plane, striped sphere shells, fine checker boards) observed by a ring of
pinhole cameras.  Ground-truth HR images come from the renderer; LR
observations are block-mean downsamples; SR references equal the GT HR
(oracle mode) or carry seeded view-local high-frequency corruption.
All randomness flows through the splitmix64-seeded xoshiro256** generator
so datasets are byte-stable across platforms.
"""

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import Camera, save_rig, load_rig
from .imgio import load_png, save_png
from .model import GaussianModel, inverse_sigmoid
from .renderer import DEFAULT_SETTINGS, downsample, render
from .rng import Xoshiro256StarStar


@dataclass
class RigSpec:
    n_cameras: int = 10
    radius: float = 3.0
    elevation_deg: float = 18.0

    def __post_init__(self):
        if self.n_cameras < 3:
            raise ValueError("need at least 3 cameras so every view has 2 neighbors")


@dataclass
class SceneSpec:
    seed: int = 0
    n_planes: int = 1
    n_spheres: int = 1
    n_boards: int = 1
    world_extent: float = 1.0
    rig: RigSpec = field(default_factory=RigSpec)


@dataclass
class CorruptionSpec:
    views: list = field(default_factory=lambda: [0])
    region: tuple = (96, 96, 160, 160)  # x0, y0, x1, y1
    amplitude: float = 0.3
    pattern: str = "noise"  # "noise" | "checker"
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.amplitude <= 0.5):
            raise ValueError("corruption amplitude must lie in (0, 0.5]")


@dataclass
class SRReferenceSpec:
    mode: str = "oracle"  # "oracle" | "corrupted"
    corruption: CorruptionSpec = None

    def __post_init__(self):
        if self.mode not in ("oracle", "corrupted"):
            raise ValueError(f"unknown SR mode {self.mode!r}")
        if self.mode == "corrupted" and self.corruption is None:
            self.corruption = CorruptionSpec()


@dataclass
class MultiViewDataset:
    cameras: list
    lr: list
    sr: list
    gt: list
    factor: int
    extent: float

    def subset(self, indices):
        return MultiViewDataset(
            cameras=[self.cameras[i] for i in indices],
            lr=[self.lr[i] for i in indices],
            sr=[self.sr[i] for i in indices],
            gt=[self.gt[i] for i in indices] if self.gt is not None else None,
            factor=self.factor, extent=self.extent)


def look_at_camera(position, target, fx, fy, cx, cy, width, height):
    """Camera at `position` looking at `target`, world +z treated as up."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:  # looking straight up/down
        right = np.array([1.0, 0.0, 0.0])
    else:
        right /= nr
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    # exact orthonormalization guards against accumulated rounding
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        rot = -rot
    return Camera(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
                  rotation=rot, translation=-rot @ position)


def ring_rig(rig, hr_size):
    """Ring of cameras around the origin at a fixed elevation."""
    f = 1.05 * hr_size
    cams = []
    for i in range(rig.n_cameras):
        theta = 2.0 * math.pi * i / rig.n_cameras
        elev = math.radians(rig.elevation_deg)
        pos = np.array([rig.radius * math.cos(theta) * math.cos(elev),
                        rig.radius * math.sin(theta) * math.cos(elev),
                        rig.radius * math.sin(elev)])
        cams.append(look_at_camera(pos, np.zeros(3), f, f,
                                   (hr_size - 1) / 2.0, (hr_size - 1) / 2.0,
                                   hr_size, hr_size))
    return cams


def _surface_gaussians(points, normals, spacing, colors, opacity=0.92):
    """Disk-like Gaussians tangent to a surface."""
    n = len(points)
    z = np.array([0.0, 0.0, 1.0])
    rots = np.empty((n, 4))
    for i, nv in enumerate(normals):
        nv = nv / np.linalg.norm(nv)
        c = float(np.dot(z, nv))
        if c > 1.0 - 1e-12:
            rots[i] = (1.0, 0.0, 0.0, 0.0)
        elif c < -1.0 + 1e-12:
            rots[i] = (0.0, 1.0, 0.0, 0.0)
        else:
            axis = np.cross(z, nv)
            axis /= np.linalg.norm(axis)
            half = 0.5 * math.acos(c)
            rots[i] = (math.cos(half), *(math.sin(half) * axis))
    tangential = np.log(0.8 * spacing)
    normal_s = np.log(0.22 * spacing)
    log_scales = np.tile([tangential, tangential, normal_s], (n, 1))
    opac = np.full(n, inverse_sigmoid(opacity))
    return GaussianModel(points, log_scales, rots, opac, colors)


def _fibonacci_sphere(n):
    idx = np.arange(n) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * idx
    z = 1.0 - 2.0 * idx / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _merge(models):
    models = [m for m in models if len(m)]
    if not models:
        return GaussianModel.empty()
    return GaussianModel(
        np.concatenate([m.positions for m in models]),
        np.concatenate([m.log_scales for m in models]),
        np.concatenate([m.rotations for m in models]),
        np.concatenate([m.opacity_logits for m in models]),
        np.concatenate([m.colors for m in models]))


def gen_scene(spec, hr_size=256):
    """Deterministic ground-truth model + camera rig from a SceneSpec.

    Every scene carries at least one fine-textured region (stripes near the
    HR Nyquist on the sphere band, checker boards) and one smooth region
    (the floor plane) so the demand and reliability maps have structure.
    """
    rng = Xoshiro256StarStar(spec.seed)
    e = spec.world_extent
    parts = []

    for _ in range(spec.n_planes):
        g = 30
        xs = np.linspace(-0.95 * e, 0.95 * e, g)
        px, py = np.meshgrid(xs, xs)
        z0 = -0.55 * e + 0.02 * e * rng.uniform(-1, 1)
        pts = np.stack([px.ravel(), py.ravel(), np.full(g * g, z0)], axis=1)
        normals = np.tile([0.0, 0.0, 1.0], (g * g, 1))
        hue = rng.uniform(0.0, 1.0)
        base = np.array([0.35 + 0.3 * hue, 0.45, 0.65 - 0.3 * hue])
        wave = 0.5 + 0.5 * np.sin(2.0 * math.pi * (px + py).ravel() / (1.9 * e)
                                  + rng.uniform(0, 6.28))
        colors = np.clip(base[None, :] * (0.55 + 0.45 * wave[:, None]), 0, 1)
        spacing = xs[1] - xs[0]
        parts.append(_surface_gaussians(pts, normals, spacing, colors))

    for _ in range(spec.n_spheres):
        n = 1400
        radius = 0.52 * e * (1.0 + 0.1 * rng.uniform(-1, 1))
        center = np.array([0.25 * e * rng.uniform(-1, 1),
                           0.25 * e * rng.uniform(-1, 1),
                           0.05 * e * rng.uniform(-1, 1)])
        unit = _fibonacci_sphere(n)
        pts = center + radius * unit
        stripes_freq = 14 + rng.randint(8)
        phase = rng.uniform(0, 6.28)
        azimuth = np.arctan2(unit[:, 1], unit[:, 0])
        stripe = np.sign(np.sin(stripes_freq * azimuth + phase))
        band = np.abs(unit[:, 2]) < 0.45  # striped equator band, smooth caps
        c_a = np.array([0.85, 0.55, 0.25])
        c_b = np.array([0.2, 0.35, 0.7])
        smooth = 0.5 * (c_a + c_b) * (0.7 + 0.3 * unit[:, 2:3])
        striped = np.where(stripe[:, None] > 0, c_a, c_b)
        colors = np.clip(np.where(band[:, None], striped, smooth), 0, 1)
        spacing = math.sqrt(4.0 * math.pi * radius ** 2 / n)
        parts.append(_surface_gaussians(pts, unit, spacing, colors))

    for _ in range(spec.n_boards):
        g = 36
        side = 0.55 * e
        theta = rng.uniform(0, 2 * math.pi)
        anchor = np.array([0.55 * e * math.cos(theta),
                           0.55 * e * math.sin(theta),
                           0.1 * e])
        normal = -anchor / np.linalg.norm(anchor)
        upv = np.array([0.0, 0.0, 1.0])
        right = np.cross(upv, normal)
        right /= np.linalg.norm(right)
        vert = np.cross(normal, right)
        us = np.linspace(-side / 2, side / 2, g)
        uu, vv = np.meshgrid(us, us)
        pts = (anchor[None, :] + uu.ravel()[:, None] * right[None, :]
               + vv.ravel()[:, None] * vert[None, :])
        cell = 2 + rng.randint(2)
        checker = ((np.floor(uu / (cell * side / g))
                    + np.floor(vv / (cell * side / g))) % 2).ravel()
        c_a = np.array([0.9, 0.9, 0.85])
        c_b = np.array([0.15, 0.15, 0.2])
        colors = np.where(checker[:, None] > 0, c_a, c_b)
        normals = np.tile(normal, (g * g, 1))
        parts.append(_surface_gaussians(pts, normals, us[1] - us[0], colors))

    model = _merge(parts)
    cameras = ring_rig(spec.rig, hr_size)
    return model, cameras


def corrupt_sr(image, corruption):
    """Add a seeded high-frequency pattern inside the region; clamp to [0,1].

    The noise value is shared across channels (a luminance texture), so the
    mean absolute change per pixel is amplitude/2 for the uniform pattern.
    """
    x0, y0, x1, y1 = corruption.region
    out = np.array(image, dtype=np.float64, copy=True)
    h = y1 - y0
    w = x1 - x0
    if h <= 0 or w <= 0:
        return out
    a = corruption.amplitude
    if corruption.pattern == "noise":
        rng = Xoshiro256StarStar(corruption.seed)
        noise = np.array([rng.uniform(-a, a) for _ in range(h * w)]).reshape(h, w)
    elif corruption.pattern == "checker":
        ys, xs = np.mgrid[0:h, 0:w]
        noise = a * (2.0 * ((ys + xs) % 2) - 1.0)
    else:
        raise ValueError(f"unknown corruption pattern {corruption.pattern!r}")
    out[y0:y1, x0:x1] += noise[:, :, None] if out.ndim == 3 else noise
    return np.clip(out, 0.0, 1.0)


def make_dataset(model, cameras, hr_size, factor, sr_spec,
                 settings=DEFAULT_SETTINGS, extent=1.0):
    """Per-view GT HR render, block-mean LR observation and SR reference."""
    if hr_size % factor:
        raise ValueError("hr_size must be divisible by the factor")
    gt = [render(model, cam, settings).color for cam in cameras]
    lr = [downsample(img, factor) for img in gt]
    if sr_spec.mode == "oracle":
        sr = [img.copy() for img in gt]
    else:
        sr = []
        corr = sr_spec.corruption
        for t, img in enumerate(gt):
            if t in corr.views:
                per_view = dataclasses.replace(
                    corr, seed=corr.seed + 1000003 * t)
                sr.append(corrupt_sr(img, per_view))
            else:
                sr.append(img.copy())
    return MultiViewDataset(cameras=list(cameras), lr=lr, sr=sr, gt=gt,
                            factor=factor, extent=extent)


# -- scene directory layout: cameras.json, lr/NNN.png, sr/NNN.png,
#    gt/NNN.png, spec.json ------------------------------------------------

def scene_spec_to_dict(scene, sr_spec, hr_size, factor):
    return {"scene": dataclasses.asdict(scene),
            "sr": dataclasses.asdict(sr_spec),
            "hr_size": hr_size, "factor": factor}


def scene_spec_from_dict(d):
    scene_d = dict(d.get("scene", {}))
    rig = RigSpec(**scene_d.pop("rig", {}))
    scene = SceneSpec(rig=rig, **scene_d)
    sr_d = dict(d.get("sr", {}))
    corr = sr_d.pop("corruption", None)
    sr = SRReferenceSpec(
        corruption=CorruptionSpec(**{**corr,
                                     "region": tuple(corr["region"]),
                                     "views": list(corr["views"])})
        if corr else None, **sr_d)
    return scene, sr, d.get("hr_size", 256), d.get("factor", 4)


def save_scene_dir(out_dir, dataset, spec_dict):
    os.makedirs(out_dir, exist_ok=True)
    save_rig(os.path.join(out_dir, "cameras.json"), dataset.cameras)
    with open(os.path.join(out_dir, "spec.json"), "w") as f:
        json.dump(spec_dict, f, indent=1)
    for name, images in (("lr", dataset.lr), ("sr", dataset.sr),
                         ("gt", dataset.gt)):
        sub = os.path.join(out_dir, name)
        os.makedirs(sub, exist_ok=True)
        for t, img in enumerate(images):
            save_png(os.path.join(sub, f"{t:03d}.png"), img)


def load_scene_dir(path):
    cameras = load_rig(os.path.join(path, "cameras.json"))
    spec_path = os.path.join(path, "spec.json")
    extent = 1.0
    factor = 4
    if os.path.exists(spec_path):
        with open(spec_path) as f:
            d = json.load(f)
        extent = d.get("scene", {}).get("world_extent", 1.0)
        factor = d.get("factor", 4)

    def load_all(name):
        sub = os.path.join(path, name)
        if not os.path.isdir(sub):
            return None
        return [load_png(os.path.join(sub, f"{t:03d}.png"))
                for t in range(len(cameras))]

    lr = load_all("lr")
    sr = load_all("sr")
    gt = load_all("gt")
    if lr and sr and lr[0].shape[0] * factor != sr[0].shape[0]:
        factor = sr[0].shape[0] // lr[0].shape[0]
    return MultiViewDataset(cameras=cameras, lr=lr, sr=sr, gt=gt,
                            factor=factor, extent=extent)


def generate_scene_dir(out_dir, scene_spec, sr_spec, hr_size=256, factor=4):
    """gen_scene + make_dataset + directory export; returns the dataset."""
    model, cameras = gen_scene(scene_spec, hr_size)
    dataset = make_dataset(model, cameras, hr_size, factor, sr_spec,
                           extent=scene_spec.world_extent)
    save_scene_dir(out_dir, dataset,
                   scene_spec_to_dict(scene_spec, sr_spec, hr_size, factor))
    return dataset
