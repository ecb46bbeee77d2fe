"""Command-line interface: gen-scene, train, maps, eval, render."""

import argparse
import json
import os
import sys

import numpy as np

from .geometry import load_rig
from .harness import (SRReferenceSpec, SceneSpec, generate_scene_dir,
                      load_scene_dir, scene_spec_from_dict)
from .imgio import save_pfm, save_png
from .metrics import psnr, ssim
from .model import load_checkpoint
from .reliability import build_view_maps
from .renderer import render
from .trainer import TrainConfig, load_config, train


def _cmd_gen_scene(args):
    if args.spec:
        with open(args.spec) as f:
            scene, sr, hr_size, factor = scene_spec_from_dict(json.load(f))
    else:
        scene, sr, hr_size, factor = SceneSpec(), SRReferenceSpec(), 256, 4
    if args.hr:
        hr_size = args.hr
    if args.factor:
        factor = args.factor
    generate_scene_dir(args.out, scene, sr, hr_size, factor)
    print(f"wrote scene with {len(load_rig(os.path.join(args.out, 'cameras.json')))} "
          f"views to {args.out}")


def _cmd_train(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    dataset = load_scene_dir(args.data)
    if args.holdout_every and args.holdout_every > 0:
        train_idx = [i for i in range(len(dataset.cameras))
                     if i % args.holdout_every != 0]
        dataset = dataset.subset(train_idx)
    model, history = train(dataset, cfg, out_dir=args.out,
                           dump_spectra=args.dump_spectra)
    last = history[-1] if history else {}
    print(f"trained {cfg.iterations} iterations, {len(model)} Gaussians, "
          f"final train PSNR {last.get('PSNR_train', float('nan')):.2f} dB")


def _cmd_maps(args):
    model = load_checkpoint(args.model)
    dataset = load_scene_dir(args.data)
    from .demand import compute_demand, DemandParams
    from .reliability import HighpassParams
    scores = compute_demand(model, dataset.cameras, DemandParams())
    maps, _ = build_view_maps(model, dataset.cameras, dataset.sr, scores,
                              HighpassParams())
    os.makedirs(args.out, exist_ok=True)
    for t, vm in enumerate(maps):
        for name, img in vm.as_dict().items():
            base = os.path.join(args.out, f"view{t:03d}_{name}")
            save_pfm(base + ".pfm", img)
            save_png(base + ".png", img)
    print(f"wrote 6 maps x {len(maps)} views to {args.out}")


def _cmd_eval(args):
    model = load_checkpoint(args.model)
    dataset = load_scene_dir(args.data)
    refs = dataset.gt if dataset.gt is not None else dataset.sr
    print("view,psnr,ssim")
    ps, ss = [], []
    for t, cam in enumerate(dataset.cameras):
        out = render(model, cam)
        p = psnr(out.color, refs[t])
        s = ssim(out.color, refs[t])
        ps.append(p)
        ss.append(s)
        print(f"{t},{p:.4f},{s:.5f}")
    print(f"mean,{np.mean(ps):.4f},{np.mean(ss):.5f}")


def _cmd_render(args):
    model = load_checkpoint(args.model)
    cams = load_rig(args.camera)
    cam = cams[args.index]
    out = render(model, cam)
    save_png(args.out, out.color)
    print(f"rendered {cam.width}x{cam.height} view to {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="relsplat")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="generate a synthetic scene directory")
    g.add_argument("--spec", help="scene spec JSON")
    g.add_argument("--out", required=True)
    g.add_argument("--hr", type=int, default=0, help="HR raster size override")
    g.add_argument("--factor", type=int, default=0, help="downsampling factor override")
    g.set_defaults(func=_cmd_gen_scene)

    t = sub.add_parser("train", help="train a model on a scene directory")
    t.add_argument("--config", help="TrainConfig JSON (defaults when omitted)")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--dump-spectra", action="store_true")
    t.add_argument("--holdout-every", type=int, default=0,
                   help="exclude every Nth view from training")
    t.set_defaults(func=_cmd_train)

    m = sub.add_parser("maps", help="export the per-view map bundle")
    m.add_argument("--model", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=_cmd_maps)

    e = sub.add_parser("eval", help="PSNR/SSIM per view as CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("render", help="render one camera to PNG")
    r.add_argument("--model", required=True)
    r.add_argument("--camera", required=True, help="camera or rig JSON")
    r.add_argument("--index", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_render)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
