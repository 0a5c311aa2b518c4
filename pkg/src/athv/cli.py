"""Command-line front end.

Subcommands are thin wrappers over the library modules. Every run is
reproducible from its flags and seeds; outputs are CSV text and 16-bit
portable graymaps, both bit-stable across runs. The ATHV_OUT environment
variable, when set, is the root that relative output paths resolve against.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .tensor import Tensor, no_grad
from .fourier import apply_mask
from .masks import cartesian_mask, gaussian2d_mask
from .metrics import parse_ranking_file, ranking_table, psnr, ssim, nrmse
from .data import make_dataset, DatasetManifest, load_sample
from .varnet import run_model, zero_filled
from . import container
from . import training


def _out_path(path: str) -> str:
    root = os.environ.get("ATHV_OUT", "")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def write_pgm(path, image: np.ndarray) -> None:
    """16-bit binary portable graymap. Input values are clipped to [0,1]."""
    if image.ndim != 2:
        raise ValueError(f"pgm image must be 2-d, got shape {image.shape}")
    levels = np.floor(np.clip(image, 0.0, 1.0) * 65535.0 + 0.5)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(levels.astype(">u2").tobytes())


def error_map(target: np.ndarray, pred: np.ndarray) -> np.ndarray:
    diff = np.abs(target - pred)
    peak = float(diff.max())
    if peak == 0.0:
        return np.zeros_like(diff)
    return np.clip(3.0 * diff / peak, 0.0, 1.0)


def _normalized(image: np.ndarray, peak: float) -> np.ndarray:
    if peak <= 0.0:
        return np.zeros_like(image)
    return image / peak


def _build_mask(kind, h, w, accel, cf, sigma_scale, seed):
    if kind == "gaussian2d":
        return gaussian2d_mask(h, w, accel, cf, sigma_scale, seed)
    return cartesian_mask(h, w, accel, cf, kind, seed)


def _eval_config(args, data_dir, accel=None):
    return training.TrainConfig(
        data_dir=str(data_dir), mask_kind=args.mask_kind,
        accel=args.accel if accel is None else accel,
        center_fraction=args.cf, sigma_scale=args.sigma_scale)


def _entries(data_dir, split):
    manifest = DatasetManifest.load(os.path.join(data_dir, "manifest.csv"))
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"no samples in split {split!r}")
    return entries


# -- subcommands ----------------------------------------------------------------


def cmd_make_data(args) -> int:
    out = _out_path(args.out)
    manifest = make_dataset(out, n_samples=args.n, size=args.size,
                            coils=args.coils, noise_sigma=args.noise,
                            seed=args.seed, ratio=args.ratio)
    n_train = len(manifest.split("train"))
    print(f"wrote {len(manifest.entries)} samples ({n_train} train) to {out}")
    return 0


def cmd_make_mask(args) -> int:
    h = args.h if args.h else args.w
    mask = _build_mask(args.kind, h, args.w, args.accel, args.cf,
                       args.sigma_scale, args.seed)
    out = _out_path(args.out)
    container.write_file(out, {"mask": mask.pattern})
    columns = int(np.count_nonzero(mask.pattern.any(axis=0)))
    points = int(np.count_nonzero(mask.pattern))
    print(f"mask {h}x{args.w} kind={args.kind} accel={args.accel} "
          f"cf={args.cf} seed={args.seed} columns={columns} points={points}")
    return 0


def cmd_train(args) -> int:
    with open(args.config) as fh:
        cfg = training.parse_config(fh.read())
    cfg.out_dir = _out_path(cfg.out_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config_echo.txt"), "w") as fh:
        fh.write(training.format_config(cfg))
    _, _, history = training.train(cfg, resume=args.resume, log=print)
    csv = training.rows_to_csv(history, training.HISTORY_COLUMNS)
    with open(os.path.join(cfg.out_dir, "train_log.csv"), "w") as fh:
        fh.write(csv)
    print(f"training done, log and checkpoints in {cfg.out_dir}")
    return 0


def cmd_reconstruct(args) -> int:
    model = training.load_checkpoint(args.checkpoint)[0]
    entries = _entries(args.data, args.split)
    cfg = _eval_config(args, args.data)
    out = _out_path(args.out)
    os.makedirs(out, exist_ok=True)
    rows = []
    with no_grad():
        for entry in entries:
            sample = load_sample(entry)
            target = sample["image"]
            h, w = target.shape
            mask = training.mask_for_entry(cfg, entry, h, w)
            k_masked = apply_mask(Tensor(sample["kspace"]), mask)
            pred = run_model(model, k_masked, mask).final.data
            zf = zero_filled(k_masked).data
            peak = float(target.max())
            sid = entry.sample_id
            write_pgm(os.path.join(out, f"{sid}_target.pgm"), _normalized(target, peak))
            write_pgm(os.path.join(out, f"{sid}_recon.pgm"), _normalized(pred, peak))
            write_pgm(os.path.join(out, f"{sid}_zf.pgm"), _normalized(zf, peak))
            write_pgm(os.path.join(out, f"{sid}_error.pgm"), error_map(target, pred))
            rows.append({"sample_id": sid, "model": model.config.arch,
                         "psnr": psnr(target, pred), "ssim": ssim(target, pred),
                         "nrmse": nrmse(target, pred)})
    with open(os.path.join(out, "metrics.csv"), "w") as fh:
        fh.write(training.rows_to_csv(rows, training.EVAL_COLUMNS))
    print(f"reconstructed {len(entries)} samples into {out}")
    return 0


def cmd_evaluate(args) -> int:
    model = training.load_checkpoint(args.checkpoint)[0]
    entries = _entries(args.data, args.split)
    cfg = _eval_config(args, args.data)
    rows = training.evaluate(model, entries, cfg)
    out = _out_path(args.out)
    with open(out, "w") as fh:
        fh.write(training.rows_to_csv(rows, training.EVAL_COLUMNS))
    for row in rows:
        if row["sample_id"] == "mean":
            print(f"{row['model']}: psnr {row['psnr']:.3f} "
                  f"ssim {row['ssim']:.4f} nrmse {row['nrmse']:.4f}")
    return 0


def _crop(image, box):
    top, left, height, width = box
    if top < 0 or left < 0 or top + height > image.shape[0] \
            or left + width > image.shape[1]:
        raise ValueError(f"crop box {box} outside image {image.shape}")
    return image[top:top + height, left:left + width]


def _grid(panels) -> np.ndarray:
    h = panels[0].shape[0]
    sep = np.ones((h, 2), dtype=panels[0].dtype)
    parts = []
    for i, p in enumerate(panels):
        if i:
            parts.append(sep)
        parts.append(p)
    return np.concatenate(parts, axis=1)


def cmd_compare(args) -> int:
    out = _out_path(args.out)
    os.makedirs(out, exist_ok=True)
    models = [training.load_checkpoint(path)[0] for path in args.checkpoints]
    entries = _entries(args.data, args.split)
    names = [m.config.arch for m in models]
    if len(set(names)) != len(names):
        names = [f"{n}#{i}" for i, n in enumerate(names)]
    table = {name: {} for name in names}
    table["zero-filled"] = {}
    for accel in args.accel:
        cfg = _eval_config(args, args.data, accel=accel)
        for name, model in zip(names, models):
            rows = training.evaluate(model, entries, cfg)
            for row in rows:
                if row["sample_id"] != "mean":
                    continue
                key = name if row["model"] == model.config.arch else "zero-filled"
                table[key][accel] = (row["psnr"], row["ssim"])
        _write_compare_panels(out, models, entries[0], cfg, accel, args.crop)
    columns = ["model"]
    for accel in args.accel:
        columns += [f"psnr_x{accel}", f"ssim_x{accel}"]
    lines = [",".join(columns)]
    for name in names + ["zero-filled"]:
        cells = [name]
        for accel in args.accel:
            p, s = table[name][accel]
            cells += [f"{p:.6f}", f"{s:.6f}"]
        lines.append(",".join(cells))
    with open(os.path.join(out, "compare.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out, "compare_config.txt"), "w") as fh:
        fh.write(f"checkpoints = {' '.join(str(c) for c in args.checkpoints)}\n"
                 f"data = {args.data}\nsplit = {args.split}\n"
                 f"accel = {' '.join(str(a) for a in args.accel)}\n"
                 f"mask_kind = {args.mask_kind}\ncf = {args.cf}\n"
                 f"sigma_scale = {args.sigma_scale}\n"
                 f"crop = {' '.join(str(v) for v in args.crop) if args.crop else 'none'}\n")
    print("\n".join(lines))
    return 0


def _write_compare_panels(out, models, entry, cfg, accel, crop):
    sample = load_sample(entry)
    target = sample["image"]
    h, w = target.shape
    mask = training.mask_for_entry(cfg, entry, h, w)
    k_masked = apply_mask(Tensor(sample["kspace"]), mask)
    peak = float(target.max())
    panels = [_normalized(target, peak)]
    errors = []
    with no_grad():
        zf = zero_filled(k_masked).data
        panels.append(_normalized(zf, peak))
        errors.append(error_map(target, zf))
        for model in models:
            pred = run_model(model, k_masked, mask).final.data
            panels.append(_normalized(pred, peak))
            errors.append(error_map(target, pred))
    write_pgm(os.path.join(out, f"grid_x{accel}.pgm"), _grid(panels))
    write_pgm(os.path.join(out, f"grid_x{accel}_error.pgm"), _grid(errors))
    if crop:
        box = tuple(crop)
        write_pgm(os.path.join(out, f"grid_x{accel}_crop.pgm"),
                  _grid([_crop(p, box) for p in panels]))


def cmd_rank_score(args) -> int:
    records = parse_ranking_file(args.file)
    rows = ranking_table(records)
    print("raw rank sums")
    for model, raw, _ in rows:
        print(f"  {model} {raw}")
    print("priority scores")
    for model, _, score in rows:
        print(f"  {model} {score:.2f}")
    return 0


# -- parser ----------------------------------------------------------------------


def _add_mask_flags(p, with_accel=True):
    p.add_argument("--mask-kind", default="random",
                   choices=("random", "equispaced", "gaussian2d"))
    if with_accel:
        p.add_argument("--accel", type=int, default=4)
    p.add_argument("--cf", type=float, default=0.08)
    p.add_argument("--sigma-scale", type=float, default=0.25)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="athv",
                                     description="dual-domain MRI reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate a synthetic phantom dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--coils", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("make-mask", help="generate an undersampling mask file")
    p.add_argument("--out", default="mask.athv")
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--h", type=int, default=0)
    p.add_argument("--kind", default="random",
                   choices=("random", "equispaced", "gaussian2d"))
    p.add_argument("--accel", type=int, required=True)
    p.add_argument("--cf", type=float, required=True)
    p.add_argument("--sigma-scale", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_mask)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="write reconstructions for a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    _add_mask_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="metric table for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", default="eval.csv")
    _add_mask_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="model comparison table and image grids")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--accel", type=int, nargs="+", default=[4])
    p.add_argument("--crop", type=int, nargs=4, default=None,
                   metavar=("TOP", "LEFT", "HEIGHT", "WIDTH"))
    _add_mask_flags(p, with_accel=False)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rank-score", help="priority scores from a ranking file")
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_rank_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        line = str(err).replace("\n", " ")
        print(f"error: {type(err).__name__}: {line}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
