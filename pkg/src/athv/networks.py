"""Model zoo: U-Net building block, sensitivity estimator, and the
architectures compared in the study (U-Net, W-Net, and the cascade CNNs
used by the variational networks in varnet.py).

Parameters live in one flat dict keyed by stable path strings such as
"unet.enc0.conv1.weight" or "cascade2.eta". The dict is ordered by
construction, and construction order is fixed, so a single seeded generator
reproduces a model bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError, kaiming_uniform
from .attention import AttentionParams, attention_forward
from . import fourier as FK

ARCHS = ("unet", "wnet", "e2e-varnet", "atthybrid-varnet")


@dataclass
class UNetConfig:
    in_channels: int = 1
    out_channels: int = 1
    base_channels: int = 32
    depth: int = 4
    with_attention: bool = False

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError(f"unet depth must be >= 1, got {self.depth}")
        if min(self.in_channels, self.out_channels, self.base_channels) < 1:
            raise ValueError("unet channel counts must be positive")
        if self.with_attention and self.base_channels % 2 != 0:
            raise ValueError("attention requires an even base channel count")


@dataclass
class ModelConfig:
    """Architecture choice plus the sub-network shapes.

    ``unet`` is the image-domain net (the U-Net baseline, the W-Net image
    stage, and the AttHybrid refinement stage). ``sens_unet`` refines the
    sensitivity maps, ``cascade_unet`` is the per-cascade k-space CNN.
    ``coils`` sizes the W-Net k-space stage (2 channels per coil).
    """

    arch: str = "atthybrid-varnet"
    cascades: int = 8
    coils: int = 4
    unet: UNetConfig = field(default_factory=lambda: UNetConfig(1, 1, 32, 4, False))
    sens_unet: UNetConfig = field(default_factory=lambda: UNetConfig(2, 2, 8, 2, False))
    cascade_unet: UNetConfig = field(default_factory=lambda: UNetConfig(2, 2, 16, 3, False))
    alpha: float = 1.0

    def validate(self) -> None:
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}, expected one of {ARCHS}")
        if self.cascades < 0:
            raise ValueError("cascades must be nonnegative")
        if self.coils < 1:
            raise ValueError("coils must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        for sub in (self.unet, self.sens_unet, self.cascade_unet):
            sub.validate()


def default_config(arch: str, coils: int = 4, cascades: int = 8) -> ModelConfig:
    """Paper-style defaults for each architecture at full scale."""
    cfg = ModelConfig(arch=arch, cascades=cascades, coils=coils)
    if arch == "atthybrid-varnet":
        # attention both in the cascade CNNs and the image refinement net
        cfg.cascade_unet = replace(cfg.cascade_unet, with_attention=True)
        cfg.unet = replace(cfg.unet, with_attention=True)
    cfg.validate()
    return cfg


# -- parameter construction ------------------------------------------------


def _add_conv(store: dict, rng, prefix: str, cin: int, cout: int, k: int) -> None:
    fan_in = cin * k * k
    store[prefix + ".weight"] = Tensor(
        kaiming_uniform(rng, (cout, cin, k, k), fan_in), requires_grad=True)
    store[prefix + ".bias"] = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)


def _add_attention(store: dict, rng, prefix: str, channels: int) -> None:
    half = channels // 2
    store[prefix + ".fc1.weight"] = Tensor(
        kaiming_uniform(rng, (half, channels), channels), requires_grad=True)
    store[prefix + ".fc1.bias"] = Tensor(np.zeros(half, dtype=np.float32), requires_grad=True)
    store[prefix + ".fc2.weight"] = Tensor(
        kaiming_uniform(rng, (channels, half), half), requires_grad=True)
    store[prefix + ".fc2.bias"] = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
    store[prefix + ".conv.weight"] = Tensor(
        kaiming_uniform(rng, (1, channels, 1, 1), channels), requires_grad=True)
    store[prefix + ".conv.bias"] = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)


def _block_channels(cfg: UNetConfig):
    """(cin, cout) pairs for every conv block plus the final 1x1 conv."""
    b = cfg.base_channels
    blocks = []
    cin = cfg.in_channels
    for i in range(cfg.depth):
        blocks.append((f"enc{i}", cin, b * 2 ** i))
        cin = b * 2 ** i
    blocks.append(("bottleneck", cin, b * 2 ** cfg.depth))
    for i in reversed(range(cfg.depth)):
        # nearest upsample keeps channels, concat adds the skip
        blocks.append((f"dec{i}", b * 2 ** (i + 1) + b * 2 ** i, b * 2 ** i))
    return blocks


def init_unet(store: dict, rng, prefix: str, cfg: UNetConfig) -> None:
    cfg.validate()
    if cfg.with_attention and any(cout % 2 for _, _, cout in _block_channels(cfg)):
        raise ValueError("attention requires even channel counts in every block")
    for name, cin, cout in _block_channels(cfg):
        _add_conv(store, rng, f"{prefix}{name}.conv1", cin, cout, 3)
        _add_conv(store, rng, f"{prefix}{name}.conv2", cout, cout, 3)
        if cfg.with_attention:
            _add_attention(store, rng, f"{prefix}{name}.att", cout)
    _add_conv(store, rng, f"{prefix}final", cfg.base_channels, cfg.out_channels, 1)


@dataclass
class Model:
    config: ModelConfig
    params: dict

    def param_groups(self) -> list:
        groups = []
        for key in self.params:
            head = key.split(".", 1)[0]
            if head not in groups:
                groups.append(head)
        return groups

    def n_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    cfg.validate()
    rng = np.random.default_rng(seed)
    store: dict = {}
    if cfg.arch == "unet":
        init_unet(store, rng, "unet.", cfg.unet)
    elif cfg.arch == "wnet":
        n2 = 2 * cfg.coils
        kcfg = replace(cfg.unet, in_channels=n2, out_channels=n2, with_attention=False)
        init_unet(store, rng, "kspace_unet.", kcfg)
        init_unet(store, rng, "image_unet.", cfg.unet)
    else:
        init_unet(store, rng, "sens.", cfg.sens_unet)
        cascade_cfg = cfg.cascade_unet
        for t in range(cfg.cascades):
            store[f"cascade{t}.eta"] = Tensor(np.array(1.0, dtype=np.float32), requires_grad=True)
            init_unet(store, rng, f"cascade{t}.cnn.", cascade_cfg)
        if cfg.arch == "atthybrid-varnet":
            init_unet(store, rng, "refine.", cfg.unet)
        # These three groups act through residual connections (sens maps are
        # coil + unet(coil), cascades add their CNN term to k-space, the
        # refiner adds to the intermediate image), so zeroing their last conv
        # makes the fresh model reproduce the zero-filled solution exactly
        # and training starts from a sane reconstruction instead of noise.
        residual = ["sens."] + [f"cascade{t}.cnn." for t in range(cfg.cascades)]
        if cfg.arch == "atthybrid-varnet":
            residual.append("refine.")
        for key, p in store.items():
            for prefix in residual:
                if key.startswith(prefix) and key[len(prefix):].startswith("final."):
                    p.data[...] = 0.0
    return Model(cfg, store)


# -- forward passes ----------------------------------------------------------


def _attention_params(params: dict, prefix: str) -> AttentionParams:
    return AttentionParams(
        params[prefix + ".fc1.weight"], params[prefix + ".fc1.bias"],
        params[prefix + ".fc2.weight"], params[prefix + ".fc2.bias"],
        params[prefix + ".conv.weight"], params[prefix + ".conv.bias"])


def _conv_block(x: Tensor, params: dict, prefix: str, with_attention: bool) -> Tensor:
    for conv in ("conv1", "conv2"):
        x = T.conv2d(x, params[f"{prefix}.{conv}.weight"], params[f"{prefix}.{conv}.bias"], padding=1)
        x = T.relu(T.instance_norm(x))
    if with_attention:
        x = attention_forward(x, _attention_params(params, f"{prefix}.att"))
    return x


def unet_forward(x: Tensor, cfg: UNetConfig, params: dict, prefix: str = "") -> Tensor:
    """Encoder-decoder with skip concatenation; preserves spatial extent."""
    if x.ndim != 3 or x.shape[0] != cfg.in_channels:
        raise ShapeError(f"unet expects [{cfg.in_channels}, H, W], got {x.shape}")
    H, W = x.shape[1], x.shape[2]
    unit = 2 ** cfg.depth
    ph, pw = (-H) % unit, (-W) % unit
    if ph or pw:
        x = T.pad2d(x, (ph // 2, ph - ph // 2, pw // 2, pw - pw // 2), mode="reflect")
    skips = []
    for i in range(cfg.depth):
        x = _conv_block(x, params, f"{prefix}enc{i}", cfg.with_attention)
        skips.append(x)
        x = T.pool_down(x)
    x = _conv_block(x, params, f"{prefix}bottleneck", cfg.with_attention)
    for i in reversed(range(cfg.depth)):
        x = T.concat([skips[i], T.upsample(x)], axis=0)
        x = _conv_block(x, params, f"{prefix}dec{i}", cfg.with_attention)
    x = T.conv2d(x, params[f"{prefix}final.weight"], params[f"{prefix}final.bias"])
    if ph or pw:
        x = T.crop2d(x, ph // 2, pw // 2, H, W)
    return x


def sens_estimate(k_masked: Tensor, mask, cfg: UNetConfig, params: dict,
                  prefix: str = "sens.") -> Tensor:
    """Estimate coil sensitivity maps from the calibration region.

    The fully sampled center of k-space is inverse-transformed per coil,
    refined residually by a shared small U-Net, and normalized so that the
    per-pixel RSS is one.
    """
    region = mask.center_region()
    k_center = FK.apply_mask(k_masked, region)
    imgs = FK.ifft2c(k_center)
    n = imgs.shape[0]
    refined = []
    for i in range(n):
        coil = T.take(imgs, i)
        refined.append(coil + unet_forward(coil, cfg, params, prefix))
    raw = T.stack(refined)
    return raw / (FK.rss(raw) + 1e-12)


def forward_unet(model: Model, zf_image: Tensor) -> Tensor:
    """Plain image-to-image mapping on the zero-filled magnitude input."""
    return unet_forward(zf_image, model.config.unet, model.params, "unet.")


def forward_wnet(model: Model, k_masked: Tensor):
    """k-space U-Net over stacked coil channels, then the image U-Net.

    Returns (k_refined, intermediate, image): the refined k-space, the RSS
    image between the two stages, and the final image.
    """
    n, _, h, w = k_masked.shape
    if n != model.config.coils:
        raise ShapeError(f"model built for {model.config.coils} coils, input has {n}")
    kcfg = replace(model.config.unet, in_channels=2 * n, out_channels=2 * n,
                   with_attention=False)
    flat = k_masked.reshape((2 * n, h, w))
    k_refined = unet_forward(flat, kcfg, model.params, "kspace_unet.").reshape((n, 2, h, w))
    intermediate = FK.rss(FK.ifft2c(k_refined))
    image = unet_forward(intermediate, model.config.unet, model.params, "image_unet.")
    return k_refined, intermediate, image
