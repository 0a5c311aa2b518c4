"""Synthetic multi-coil dataset: elliptical phantoms, smooth coil maps,
noisy acquisition, manifest handling, and the train/test split.

Everything is a pure function of its seeds, so datasets regenerate
bit-identically. Sample files are tensor containers holding three entries:
"image" [H,W], "smaps" [N,2,H,W], "kspace" [N,2,H,W] (the fully sampled
noisy measurement; undersampling happens at load time from the manifest's
mask seed).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, no_grad
from .fourier import fft2c, expand, round_half_away
from . import container

VALID_SIZES = (32, 64, 128, 256)


@dataclass
class PhantomSpec:
    size: int = 64
    n_ellipses: int = 8
    intensity: tuple = (0.15, 0.85)
    seed: int = 0

    def validate(self) -> None:
        if self.size not in VALID_SIZES:
            raise ValueError(f"size must be one of {VALID_SIZES}, got {self.size}")
        lo, hi = self.intensity
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"intensity range must satisfy 0 <= lo <= hi <= 1, got {self.intensity}")
        if self.n_ellipses < 0:
            raise ValueError("n_ellipses must be nonnegative")


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Sum of random ellipses, clipped to [0, 1]. float32 [size, size]."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.size
    y, x = np.mgrid[0:n, 0:n]
    img = np.zeros((n, n), dtype=np.float64)
    lo, hi = spec.intensity
    for _ in range(spec.n_ellipses):
        cy, cx = rng.uniform(0.2 * n, 0.8 * n, size=2)
        a, b = rng.uniform(0.08 * n, 0.35 * n, size=2)
        theta = rng.uniform(0, np.pi)
        amp = rng.uniform(lo, hi)
        ct, st = np.cos(theta), np.sin(theta)
        u = (x - cx) * ct + (y - cy) * st
        v = -(x - cx) * st + (y - cy) * ct
        img += amp * ((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_coil_maps(n_coils: int, h: int, w: int) -> np.ndarray:
    """Smooth complex coil profiles, RSS-normalized to 1 per pixel.

    Coil i has a Gaussian magnitude bump centered on the image border at
    angle 2*pi*i/n and a mild linear phase ramp along that direction.
    float32 [n_coils, 2, h, w].
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    maps = np.zeros((n_coils, 2, h, w))
    sigma = 0.45 * max(h, w)
    for i in range(n_coils):
        theta = 2 * np.pi * i / n_coils
        cy = h / 2 + (h / 2) * np.sin(theta)
        cx = w / 2 + (w / 2) * np.cos(theta)
        mag = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * sigma ** 2))
        ramp = 2 * np.pi * (i + 1) / (n_coils + 1)
        phase = ramp * ((x - w / 2) * np.cos(theta) + (y - h / 2) * np.sin(theta)) / max(h, w)
        maps[i, 0] = mag * np.cos(phase)
        maps[i, 1] = mag * np.sin(phase)
    norm = np.sqrt((maps ** 2).sum(axis=(0, 1), keepdims=True))
    return (maps / norm).astype(np.float32)


def simulate_acquisition(image: np.ndarray, smaps: np.ndarray,
                         noise_sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    """k = fft2c(S_i * x) + e per coil, e i.i.d. Gaussian on both planes."""
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    image = np.asarray(image)
    if image.shape != smaps.shape[-2:]:
        raise ValueError(f"image {image.shape} does not match maps {smaps.shape}")
    planes = np.stack([image, np.zeros_like(image)]).astype(smaps.dtype)
    with no_grad():
        k = fft2c(expand(Tensor(planes), Tensor(smaps))).data
    if noise_sigma > 0:
        noise = np.random.default_rng(seed).normal(0.0, noise_sigma, size=k.shape)
        k = k + noise.astype(k.dtype)
    return k


# -- manifest ------------------------------------------------------------------


@dataclass
class ManifestEntry:
    sample_id: str
    path: str
    split: str
    coils: int
    mask_seed: int


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "path", "split", "coils", "mask_seed"])
            for e in self.entries:
                writer.writerow([e.sample_id, e.path, e.split, e.coils, e.mask_seed])

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        manifest = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["sample_id", "path", "split", "coils", "mask_seed"]:
                raise ValueError(f"unrecognized manifest header in {path}: {header}")
            for row in reader:
                sid, p, split, coils, mask_seed = row
                manifest.entries.append(ManifestEntry(sid, p, split, int(coils), int(mask_seed)))
        return manifest


def split_dataset(manifest: DatasetManifest, ratio: float, seed: int) -> DatasetManifest:
    """Assign train/test by a seeded shuffle; round(ratio*N) samples train."""
    n = len(manifest.entries)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n_train = round_half_away(ratio * n)
    order = np.random.default_rng(seed).permutation(n)
    out = DatasetManifest()
    for rank, idx in enumerate(order):
        e = manifest.entries[idx]
        split = "train" if rank < n_train else "test"
        out.entries.append(ManifestEntry(e.sample_id, e.path, split, e.coils, e.mask_seed))
    out.entries.sort(key=lambda e: e.sample_id)
    return out


def make_dataset(out_dir, n_samples: int, size: int = 64, coils: int = 4,
                 noise_sigma: float = 0.0, seed: int = 0, ratio: float = 0.8) -> DatasetManifest:
    """Generate sample files plus manifest.csv under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    smaps = make_coil_maps(coils, size, size)
    manifest = DatasetManifest()
    master = np.random.default_rng(seed)
    for i in range(n_samples):
        phantom_seed, noise_seed, mask_seed = (int(v) for v in
                                               master.integers(0, 2 ** 31 - 1, size=3))
        n_ell = int(master.integers(5, 13))
        image = make_phantom(PhantomSpec(size=size, n_ellipses=n_ell, seed=phantom_seed))
        kspace = simulate_acquisition(image, smaps, noise_sigma, noise_seed)
        sid = f"sample{i:04d}"
        path = os.path.join(out_dir, sid + ".athv")
        container.write_file(path, {"image": image, "smaps": smaps, "kspace": kspace})
        manifest.entries.append(ManifestEntry(sid, path, "train", coils, mask_seed))
    manifest = split_dataset(manifest, ratio, seed)
    manifest.save(os.path.join(out_dir, "manifest.csv"))
    return manifest


def load_sample(entry: ManifestEntry) -> dict:
    data = container.read_file(entry.path)
    for key in ("image", "smaps", "kspace"):
        if key not in data:
            raise ValueError(f"sample file {entry.path} is missing entry {key!r}")
    return data
