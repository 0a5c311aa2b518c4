"""Adam optimization, the training/evaluation loops, and checkpointing.

Determinism rules: the model is built from (config, seed); the batch order
of epoch e comes from default_rng([seed, e]); checkpoints are written at
epoch boundaries. A resumed run therefore replays the exact trajectory of
an uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields

import numpy as np

from .tensor import Tensor, no_grad
from .fourier import apply_mask
from .masks import cartesian_mask, gaussian2d_mask
from .networks import ModelConfig, UNetConfig, Model, build_model
from .varnet import run_model, zero_filled
from .metrics import nrmse_loss, dual_loss, nrmse, psnr, ssim
from .data import DatasetManifest, load_sample
from . import container


class NonFiniteGradientError(RuntimeError):
    def __init__(self, key: str):
        super().__init__(f"non-finite gradient in parameter {key!r}; step aborted")
        self.key = key


class NonFiniteLossError(RuntimeError):
    pass


class Adam:
    """Bias-corrected Adam. ``step()`` validates every gradient before
    mutating any state, so a poisoned batch cannot corrupt the moments."""

    def __init__(self, params: dict, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        for key, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradientError(key)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, p in self.params.items():
            g = p.grad if p.grad is not None else 0.0
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- configuration -------------------------------------------------------------


@dataclass
class TrainConfig:
    data_dir: str = ""
    out_dir: str = "."
    arch: str = "atthybrid-varnet"
    epochs: int = 1
    batch_size: int = 4
    seed: int = 0
    lr: float = 0.001
    alpha: float = 1.0
    cascades: int = 2
    max_steps: int = 0          # 0 = no step cap
    checkpoint_every: int = 0   # epochs between checkpoints; 0 = end only
    eval_every: int = 1         # epochs between test-set evaluations
    mask_kind: str = "random"   # random | equispaced | gaussian2d
    accel: int = 4
    center_fraction: float = 0.08
    sigma_scale: float = 0.25
    unet_base: int = 32
    unet_depth: int = 4
    sens_base: int = 8
    sens_depth: int = 2
    cascade_base: int = 16
    cascade_depth: int = 3

    def validate(self) -> None:
        if not self.data_dir:
            raise ValueError("data_dir is required")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.mask_kind not in ("random", "equispaced", "gaussian2d"):
            raise ValueError(f"unknown mask_kind {self.mask_kind!r}")


def parse_config(text: str) -> TrainConfig:
    """Parse `key = value` lines; '#' starts a comment."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    cfg = TrainConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        kind = known[key]
        try:
            if kind in (int, "int"):
                setattr(cfg, key, int(value))
            elif kind in (float, "float"):
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
        except ValueError:
            raise ValueError(f"config line {lineno}: bad value {value!r} for {key!r}") from None
    return cfg


def format_config(cfg: TrainConfig) -> str:
    return "\n".join(f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)) + "\n"


def model_config(cfg: TrainConfig, coils: int) -> ModelConfig:
    attention = cfg.arch == "atthybrid-varnet"
    mc = ModelConfig(
        arch=cfg.arch, cascades=cfg.cascades, coils=coils,
        unet=UNetConfig(1, 1, cfg.unet_base, cfg.unet_depth, attention),
        sens_unet=UNetConfig(2, 2, cfg.sens_base, cfg.sens_depth, False),
        cascade_unet=UNetConfig(2, 2, cfg.cascade_base, cfg.cascade_depth, attention),
        alpha=cfg.alpha,
    )
    mc.validate()
    return mc


def mask_for_entry(cfg: TrainConfig, entry, h: int, w: int):
    if cfg.mask_kind == "gaussian2d":
        return gaussian2d_mask(h, w, cfg.accel, cfg.center_fraction,
                               cfg.sigma_scale, entry.mask_seed)
    return cartesian_mask(h, w, cfg.accel, cfg.center_fraction,
                          cfg.mask_kind, entry.mask_seed)


def sample_loss(model: Model, target: np.ndarray, out, alpha: float) -> Tensor:
    if model.config.arch == "unet":
        return nrmse_loss(target, out.final)
    return dual_loss(target, out.intermediate, out.final, alpha)


# -- checkpointing -------------------------------------------------------------


def _model_config_dict(mc: ModelConfig) -> dict:
    return dataclasses.asdict(mc)


def _model_config_from(d: dict) -> ModelConfig:
    d = dict(d)
    for key in ("unet", "sens_unet", "cascade_unet"):
        d[key] = UNetConfig(**d[key])
    return ModelConfig(**d)


def save_checkpoint(path, model: Model, adam: Adam, epoch: int, step: int,
                    seed: int) -> None:
    header = {
        "format": "athv-checkpoint", "version": 1,
        "epoch": epoch, "step": step, "seed": seed,
        "model": _model_config_dict(model.config),
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                 "eps": adam.eps, "t": adam.t},
    }
    entries = {}
    for key, p in model.params.items():
        entries[f"param.{key}"] = p.data
    for key in model.params:
        entries[f"adam.m.{key}"] = adam.m[key]
        entries[f"adam.v.{key}"] = adam.v[key]
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(container.container_write(entries))


def load_checkpoint(path):
    """Returns (model, adam, epoch, step, seed)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode())
    if header.get("format") != "athv-checkpoint" or header.get("version") != 1:
        raise ValueError(f"{path} is not a version-1 checkpoint")
    entries = container.container_read(blob[nl + 1:])
    mc = _model_config_from(header["model"])
    model = build_model(mc, seed=0)
    expected = {f"param.{k}" for k in model.params}
    expected |= {f"adam.m.{k}" for k in model.params}
    expected |= {f"adam.v.{k}" for k in model.params}
    if set(entries) != expected:
        raise ValueError(f"checkpoint {path} does not match its declared config")
    a = header["adam"]
    adam = Adam(model.params, lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
    adam.t = a["t"]
    for key, p in model.params.items():
        p.data = entries[f"param.{key}"]
        adam.m[key] = entries[f"adam.m.{key}"]
        adam.v[key] = entries[f"adam.v.{key}"]
    return model, adam, header["epoch"], header["step"], header["seed"]


# -- loops ---------------------------------------------------------------------


def _batches(order, size: int):
    for i in range(0, len(order), size):
        yield order[i:i + size]


def train(cfg: TrainConfig, resume=None, log=None):
    """Returns (model, adam, history). history rows are dicts with keys
    epoch, step, train_loss, test_psnr, test_ssim (NaN when not evaluated)."""
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = DatasetManifest.load(os.path.join(cfg.data_dir, "manifest.csv"))
    train_entries = manifest.split("train")
    test_entries = manifest.split("test")
    if not train_entries:
        raise ValueError("manifest has no training samples")
    coils = train_entries[0].coils
    mc = model_config(cfg, coils)
    if resume is not None:
        model, adam, start_epoch, step, saved_seed = load_checkpoint(resume)
        if saved_seed != cfg.seed:
            raise ValueError(f"checkpoint seed {saved_seed} != config seed {cfg.seed}")
        if _model_config_dict(model.config) != _model_config_dict(mc):
            raise ValueError("checkpoint model config does not match the train config")
    else:
        model = build_model(mc, cfg.seed)
        adam = Adam(model.params, lr=cfg.lr)
        start_epoch, step = 0, 0
    history = []
    done_epochs = start_epoch
    for epoch in range(start_epoch, cfg.epochs):
        if cfg.max_steps and step >= cfg.max_steps:
            break
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_entries))
        epoch_losses = []
        for batch in _batches(order, cfg.batch_size):
            if cfg.max_steps and step >= cfg.max_steps:
                break
            model.zero_grad()
            total = None
            for idx in batch:
                entry = train_entries[int(idx)]
                sample = load_sample(entry)
                h, w = sample["image"].shape
                mask = mask_for_entry(cfg, entry, h, w)
                k_masked = apply_mask(Tensor(sample["kspace"]), mask)
                out = run_model(model, k_masked, mask)
                loss = sample_loss(model, sample["image"], out, cfg.alpha)
                total = loss if total is None else total + loss
            batch_loss = total / len(batch)
            if not np.isfinite(batch_loss.data):
                raise NonFiniteLossError(f"loss became non-finite at step {step}")
            batch_loss.backward()
            adam.step()
            step += 1
            epoch_losses.append(float(batch_loss.data))
        row = {"epoch": epoch, "step": step,
               "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
               "test_psnr": float("nan"), "test_ssim": float("nan")}
        is_last = epoch == cfg.epochs - 1 or (cfg.max_steps and step >= cfg.max_steps)
        if test_entries and cfg.eval_every and ((epoch + 1) % cfg.eval_every == 0 or is_last):
            rows = evaluate(model, test_entries, cfg)
            mean = next(r for r in rows if r["sample_id"] == "mean" and r["model"] == cfg.arch)
            row["test_psnr"] = mean["psnr"]
            row["test_ssim"] = mean["ssim"]
        history.append(row)
        done_epochs = epoch + 1
        if log is not None:
            log(f"epoch {epoch}: loss {row['train_loss']:.6f} "
                f"psnr {row['test_psnr']:.3f} ssim {row['test_ssim']:.4f}")
        if cfg.checkpoint_every and done_epochs % cfg.checkpoint_every == 0:
            save_checkpoint(os.path.join(cfg.out_dir, f"checkpoint_epoch{epoch:04d}.athv"),
                            model, adam, done_epochs, step, cfg.seed)
    final = os.path.join(cfg.out_dir, "checkpoint_final.athv")
    save_checkpoint(final, model, adam, done_epochs, step, cfg.seed)
    return model, adam, history


def evaluate(model: Model, entries, cfg: TrainConfig) -> list:
    """Per-sample metric rows for the model and the zero-filled baseline,
    then one mean row per model name. Row order is deterministic."""
    rows = []
    arch = model.config.arch
    with no_grad():
        for entry in entries:
            sample = load_sample(entry)
            target = sample["image"]
            h, w = target.shape
            mask = mask_for_entry(cfg, entry, h, w)
            k_masked = apply_mask(Tensor(sample["kspace"]), mask)
            out = run_model(model, k_masked, mask)
            zf = zero_filled(k_masked)
            for name, pred in ((arch, out.final.data), ("zero-filled", zf.data)):
                rows.append({"sample_id": entry.sample_id, "model": name,
                             "psnr": psnr(target, pred), "ssim": ssim(target, pred),
                             "nrmse": nrmse(target, pred)})
    for name in (arch, "zero-filled"):
        sub = [r for r in rows if r["model"] == name]
        rows.append({"sample_id": "mean", "model": name,
                     "psnr": float(np.mean([r["psnr"] for r in sub])),
                     "ssim": float(np.mean([r["ssim"] for r in sub])),
                     "nrmse": float(np.mean([r["nrmse"] for r in sub]))})
    return rows


EVAL_COLUMNS = ("sample_id", "model", "psnr", "ssim", "nrmse")


def rows_to_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r[c]
            cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


HISTORY_COLUMNS = ("epoch", "step", "train_loss", "test_psnr", "test_ssim")
