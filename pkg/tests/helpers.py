"""Shared fixtures for the network-level tests: tiny configurations and a
small deterministic acquisition setup."""

from __future__ import annotations

import numpy as np

from athv.tensor import Tensor
from athv.networks import ModelConfig, UNetConfig, build_model
from athv.masks import cartesian_mask
from athv.fourier import apply_mask
from athv import data as D


def tiny_config(arch: str, coils: int = 2, cascades: int = 2,
                attention: bool | None = None) -> ModelConfig:
    """Small nets that still exercise every code path on 32x32 inputs."""
    if attention is None:
        attention = arch == "atthybrid-varnet"
    cfg = ModelConfig(
        arch=arch, cascades=cascades, coils=coils,
        unet=UNetConfig(1, 1, 8, 2, attention),
        sens_unet=UNetConfig(2, 2, 4, 2, False),
        cascade_unet=UNetConfig(2, 2, 8, 2, attention),
        alpha=1.0,
    )
    cfg.validate()
    return cfg


def tiny_acquisition(size: int = 32, coils: int = 2, accel: int = 2,
                     cf: float = 0.25, phantom_seed: int = 3, mask_seed: int = 5):
    """Returns (image, smaps, k_full, mask, k_masked Tensor)."""
    image = D.make_phantom(D.PhantomSpec(size=size, n_ellipses=6, seed=phantom_seed))
    smaps = D.make_coil_maps(coils, size, size)
    k_full = D.simulate_acquisition(image, smaps, noise_sigma=0.0)
    mask = cartesian_mask(size, size, accel, cf, "random", mask_seed)
    k_masked = apply_mask(Tensor(k_full), mask)
    return image, smaps, k_full, mask, k_masked


def zero_final_layers(model, prefixes) -> None:
    """Zero the last conv of each listed sub-network, making it a zero map."""
    for key, t in model.params.items():
        for p in prefixes:
            if key.startswith(p) and key[len(p):].startswith("final."):
                t.data[...] = 0.0


def zero_group(model, prefix: str) -> None:
    for key, t in model.params.items():
        if key.startswith(prefix):
            t.data[...] = 0.0


def table3_records():
    """100 four-model ranking records whose raw rank sums are exactly
    396 (unet), 296 (wnet), 164 (e2e), 144 (atthybrid).

    Record mix solved by hand from the column/row constraints:
      48 x {att:1, e2e:2, wnet:3, unet:4}
      40 x {e2e:1, att:2, wnet:3, unet:4}
       8 x {att:1, wnet:2, e2e:3, unet:4}
       4 x {e2e:1, att:2, unet:3, wnet:4}
    """
    from athv.metrics import RankingRecord

    mix = (
        (48, {"atthybrid": 1, "e2e": 2, "wnet": 3, "unet": 4}),
        (40, {"e2e": 1, "atthybrid": 2, "wnet": 3, "unet": 4}),
        (8, {"atthybrid": 1, "wnet": 2, "e2e": 3, "unet": 4}),
        (4, {"e2e": 1, "atthybrid": 2, "unet": 3, "wnet": 4}),
    )
    records = []
    for count, ranks in mix:
        for _ in range(count):
            ordered = {m: ranks[m] for m in ("unet", "wnet", "e2e", "atthybrid")}
            records.append(RankingRecord(f"slice{len(records):03d}", ordered))
    for r in records:
        r.validate()
    return records
