"""Desk-scale model comparison on synthetic phantoms.

Trains the four architectures at an equal step budget over several seeds,
then prints mean test PSNR/SSIM per model next to the zero-filled baseline.
This is the phantom stand-in for the full-data comparison tables; expect the
hybrid model to lead the U-Net baseline, with the margin between the
variational models depending on seed and budget at this scale.

Usage:
    python3 scripts/desk_scale_study.py --out runs/desk --seeds 0 1 2 3 4
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from athv.data import make_dataset, DatasetManifest
from athv.training import TrainConfig, train, evaluate, rows_to_csv


ARCHS = ("atthybrid-varnet", "e2e-varnet", "wnet", "unet")


def run_one(args, arch, seed, entries):
    cfg = TrainConfig(
        data_dir=args.data, out_dir=os.path.join(args.out, f"{arch}_s{seed}"),
        arch=arch, epochs=args.epochs, batch_size=4, seed=seed, lr=0.001,
        cascades=2, accel=args.accel, center_fraction=0.08,
        mask_kind="equispaced", unet_base=16, unet_depth=2,
        sens_base=4, sens_depth=2, cascade_base=16, cascade_depth=2,
        eval_every=0)
    t0 = time.time()
    model, _, hist = train(cfg)
    rows = evaluate(model, entries, cfg)
    means = {r["model"]: r for r in rows if r["sample_id"] == "mean"}
    result = {"arch": arch, "seed": seed, "steps": hist[-1]["step"],
              "psnr": means[arch]["psnr"], "ssim": means[arch]["ssim"],
              "zf_psnr": means["zero-filled"]["psnr"],
              "zf_ssim": means["zero-filled"]["ssim"]}
    print(f"{arch} seed {seed}: psnr {result['psnr']:.2f} "
          f"ssim {result['ssim']:.4f} ({time.time() - t0:.0f}s)", flush=True)
    return result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="", help="existing dataset dir (default: generate)")
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--coils", type=int, default=4)
    ap.add_argument("--accel", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--archs", nargs="+", default=list(ARCHS), choices=ARCHS)
    args = ap.parse_args()

    if not args.data:
        args.data = os.path.join(args.out, "data")
        make_dataset(args.data, n_samples=args.n, size=args.size,
                     coils=args.coils, noise_sigma=0.0, seed=123, ratio=0.75)
        print(f"generated {args.n} phantoms in {args.data}")
    entries = DatasetManifest.load(os.path.join(args.data, "manifest.csv")).split("test")

    results = [run_one(args, arch, seed, entries)
               for arch in args.archs for seed in args.seeds]

    print(f"\nmean test PSNR/SSIM over seeds {args.seeds} "
          f"({args.accel}x equispaced, {results[0]['steps']} steps):")
    zf_psnr = float(np.mean([r["zf_psnr"] for r in results]))
    zf_ssim = float(np.mean([r["zf_ssim"] for r in results]))
    summary = []
    for arch in args.archs:
        sub = [r for r in results if r["arch"] == arch]
        summary.append({"sample_id": "mean-over-seeds", "model": arch,
                        "psnr": float(np.mean([r["psnr"] for r in sub])),
                        "ssim": float(np.mean([r["ssim"] for r in sub])),
                        "nrmse": float("nan")})
    summary.append({"sample_id": "mean-over-seeds", "model": "zero-filled",
                    "psnr": zf_psnr, "ssim": zf_ssim, "nrmse": float("nan")})
    for row in sorted(summary, key=lambda r: -r["psnr"]):
        print(f"  {row['model']:>18}: psnr {row['psnr']:.2f} ssim {row['ssim']:.4f}")
    os.makedirs(args.out, exist_ok=True)
    table = os.path.join(args.out, "summary.csv")
    with open(table, "w") as fh:
        fh.write(rows_to_csv(summary, ("sample_id", "model", "psnr", "ssim", "nrmse")))
    print(f"wrote {table}")


if __name__ == "__main__":
    main()
