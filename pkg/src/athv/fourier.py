"""Centered orthonormal Fourier transforms and multi-coil operators.

Complex data is stored as a pair of real planes along axis -3:

    complex image   [2, H, W]      planes (real, imag)
    coil stack      [N, 2, H, W]   one complex plane pair per coil

``fft2c`` is the unitary 2-D DFT with both the image and frequency origins
at index (H//2, W//2): fftshift(fft2(ifftshift(x), norm="ortho")). Because
the complex DFT matrix is symmetric, the transpose of its real-pair
representation is the real-pair representation of the inverse transform, so
the backward pass of fft2c is ifft2c applied to the gradient planes (and
vice versa).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ShapeError, as_tensor, _result, _unbroadcast

_TINY = 1e-12


def round_half_away(x: float) -> int:
    """Nearest integer, halves away from zero (python round() is banker's)."""
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))


def _centered_span(extent: int, count: int) -> slice:
    start = (extent - count + 1) // 2
    return slice(start, start + count)


@dataclass
class Mask:
    """Binary undersampling pattern plus the metadata that produced it.

    ``pattern`` is a float32 {0,1} array of shape [H, W]. ``kind`` is one of
    "cartesian-random", "cartesian-equispaced", "gaussian2d".
    """

    pattern: np.ndarray
    accel: int
    center_fraction: float
    kind: str
    seed: int

    @property
    def shape(self) -> tuple:
        return self.pattern.shape

    def center_region(self) -> np.ndarray:
        """The fully sampled calibration region as a {0,1} array.

        Recomputed from the recorded metadata with the same rounding rule
        the generators use, so it stays valid after (de)serialization.
        """
        h, w = self.pattern.shape
        region = np.zeros((h, w), dtype=self.pattern.dtype)
        if self.kind in ("cartesian-random", "cartesian-equispaced"):
            n_center = round_half_away(w * self.center_fraction)
            if n_center < 1:
                raise ValueError(f"mask kind {self.kind} with cf {self.center_fraction} has no calibration center")
            region[:, _centered_span(w, n_center)] = 1
        elif self.kind == "gaussian2d":
            side = round_half_away(np.sqrt(h * w) * self.center_fraction)
            if side < 1:
                raise ValueError(f"mask kind {self.kind} with cf {self.center_fraction} has no calibration center")
            region[_centered_span(h, side), _centered_span(w, side)] = 1
        else:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        return region


def _check_planes(x: Tensor, name: str) -> None:
    if x.ndim < 3 or x.shape[-3] != 2:
        raise ShapeError(f"{name} expects planes along axis -3 ([..., 2, H, W]), got {x.shape}")


def _centered_fft(planes: np.ndarray, inverse: bool) -> np.ndarray:
    z = planes[..., 0, :, :] + 1j * planes[..., 1, :, :]
    z = np.fft.ifftshift(z, axes=(-2, -1))
    z = (np.fft.ifft2 if inverse else np.fft.fft2)(z, axes=(-2, -1), norm="ortho")
    z = np.fft.fftshift(z, axes=(-2, -1))
    return np.stack([z.real, z.imag], axis=-3).astype(planes.dtype, copy=False)


def fft2c(x) -> Tensor:
    """Centered orthonormal 2-D FFT over the trailing spatial axes."""
    x = as_tensor(x)
    _check_planes(x, "fft2c")
    out = _result(_centered_fft(x.data, inverse=False), (x,))
    if out.requires_grad:
        def _bw():
            x._accum(_centered_fft(out.grad, inverse=True))
        out._backward = _bw
    return out


def ifft2c(x) -> Tensor:
    """Inverse of fft2c."""
    x = as_tensor(x)
    _check_planes(x, "ifft2c")
    out = _result(_centered_fft(x.data, inverse=True), (x,))
    if out.requires_grad:
        def _bw():
            x._accum(_centered_fft(out.grad, inverse=False))
        out._backward = _bw
    return out


def complex_mul(a, b) -> Tensor:
    """Pointwise complex product of plane-pair tensors, with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_planes(a, "complex_mul")
    _check_planes(b, "complex_mul")
    ar, ai = a.data[..., 0, :, :], a.data[..., 1, :, :]
    br, bi = b.data[..., 0, :, :], b.data[..., 1, :, :]
    out_data = np.stack([ar * br - ai * bi, ar * bi + ai * br], axis=-3)
    out = _result(out_data, (a, b))
    if out.requires_grad:
        def _bw():
            gr, gi = out.grad[..., 0, :, :], out.grad[..., 1, :, :]
            if a.requires_grad:
                # d/da of a*b, transposed: multiply the gradient by conj(b)
                ga = np.stack([gr * br + gi * bi, gi * br - gr * bi], axis=-3)
                a._accum(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.stack([gr * ar + gi * ai, gi * ar - gr * ai], axis=-3)
                b._accum(_unbroadcast(gb, b.shape))
        out._backward = _bw
    return out


def conj(x) -> Tensor:
    """Complex conjugate: negate the imaginary plane."""
    x = as_tensor(x)
    _check_planes(x, "conj")
    out_data = x.data.copy()
    out_data[..., 1, :, :] *= -1
    out = _result(out_data, (x,))
    if out.requires_grad:
        def _bw():
            g = out.grad.copy()
            g[..., 1, :, :] *= -1
            x._accum(g)
        out._backward = _bw
    return out


def magnitude(x) -> Tensor:
    """|x| of a complex image [2, H, W] -> [1, H, W].

    The forward value is the exact square-root magnitude; the backward
    denominator is clamped away from zero so the origin is safe.
    """
    x = as_tensor(x)
    if x.shape[:1] != (2,) or x.ndim != 3:
        raise ShapeError(f"magnitude expects [2, H, W], got {x.shape}")
    m = np.sqrt(x.data[0] ** 2 + x.data[1] ** 2)
    out = _result(m[None], (x,))
    if out.requires_grad:
        def _bw():
            scale = out.grad[0] / (m + _TINY)
            x._accum(np.stack([scale * x.data[0], scale * x.data[1]]))
        out._backward = _bw
    return out


def rss(coils) -> Tensor:
    """Root-sum-of-squares combine: [N, 2, H, W] -> [1, H, W]."""
    coils = as_tensor(coils)
    if coils.ndim != 4 or coils.shape[1] != 2:
        raise ShapeError(f"rss expects [N, 2, H, W], got {coils.shape}")
    r = np.sqrt((coils.data ** 2).sum(axis=(0, 1)))
    out = _result(r[None], (coils,))
    if out.requires_grad:
        def _bw():
            coils._accum(out.grad[0] / (r + _TINY) * coils.data)
        out._backward = _bw
    return out


def apply_mask(k, mask) -> Tensor:
    """Zero out unsampled k-space entries; mask is an [H, W] 0/1 array."""
    k = as_tensor(k)
    m = np.asarray(mask.pattern if hasattr(mask, "pattern") else mask)
    if m.shape != k.shape[-2:]:
        raise ShapeError(f"mask {m.shape} does not match k-space extent {k.shape[-2:]}")
    return k * Tensor(m.astype(k.dtype))


def expand(x, smaps) -> Tensor:
    """SENSE expansion: per-coil product S_i * x, [2,H,W] -> [N,2,H,W]."""
    x, smaps = as_tensor(x), as_tensor(smaps)
    if x.ndim != 3 or x.shape[0] != 2:
        raise ShapeError(f"expand expects image [2, H, W], got {x.shape}")
    if smaps.ndim != 4 or smaps.shape[1] != 2 or smaps.shape[-2:] != x.shape[-2:]:
        raise ShapeError(f"expand maps {smaps.shape} do not match image {x.shape}")
    return complex_mul(smaps, x.reshape((1,) + x.shape))


def reduce(coils, smaps) -> Tensor:
    """SENSE reduction: sum_i conj(S_i) * y_i, [N,2,H,W] -> [2,H,W]."""
    coils, smaps = as_tensor(coils), as_tensor(smaps)
    if coils.shape != smaps.shape:
        raise ShapeError(f"reduce shape mismatch: coils {coils.shape}, maps {smaps.shape}")
    return complex_mul(conj(smaps), coils).sum(axis=0)


def dc_step(k, k_ref, mask, eta, refinement=None) -> Tensor:
    """One data-consistency update.

        k' = k - eta * M (k - k_ref) + refinement

    ``eta`` is a (learnable) scalar Tensor. When k agrees with k_ref on the
    sampled set and the refinement is zero, k is returned bit-exactly.
    """
    k, k_ref = as_tensor(k), as_tensor(k_ref)
    if k.shape != k_ref.shape:
        raise ShapeError(f"dc_step shape mismatch: {k.shape} vs {k_ref.shape}")
    eta = as_tensor(eta)
    if eta.size != 1:
        raise ShapeError(f"dc_step eta must be scalar, got shape {eta.shape}")
    out = k - eta * apply_mask(k - k_ref, mask)
    if refinement is not None:
        out = out + refinement
    return out
