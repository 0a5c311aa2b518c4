"""Unrolled variational reconstruction and the full hybrid architecture.

One cascade performs the gradient-style update

    k^{t+1} = k^t - eta^t M (k^t - k_ref) + G(k^t)

where G transforms the current k-space through image space: inverse FFT per
coil, coil reduction, a small CNN on the two-channel complex image, coil
expansion, forward FFT. After T cascades the intermediate image is the
magnitude of the reduced reconstruction; the hybrid model adds an
image-domain refinement U-Net on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from . import fourier as FK
from .tensor import Tensor, ShapeError
from .networks import Model, unet_forward, sens_estimate, forward_unet, forward_wnet


@dataclass
class ReconstructionOutput:
    """intermediate and final are [H, W] magnitude images; k_final is the
    k-space the cascade loop ended on (None for the image-only baseline)."""

    intermediate: Tensor
    final: Tensor
    k_final: Tensor | None = None


def refinement_term(k_t: Tensor, smaps: Tensor, cnn) -> Tensor:
    """G(k) = fft2c(expand(cnn(reduce(ifft2c(k))), S)).

    ``cnn`` is any callable on the [2, H, W] complex image; passing an
    identity recovers k itself when the maps are normalized.
    """
    if k_t.shape != smaps.shape:
        raise ShapeError(f"refinement shape mismatch: k {k_t.shape}, maps {smaps.shape}")
    image = FK.reduce(FK.ifft2c(k_t), smaps)
    return FK.fft2c(FK.expand(cnn(image), smaps))


def _unrolled(model: Model, k_masked: Tensor, mask) -> tuple:
    cfg = model.config
    smaps = sens_estimate(k_masked, mask, cfg.sens_unet, model.params, "sens.")
    k = k_masked
    for t in range(cfg.cascades):
        cnn = lambda img, _t=t: unet_forward(
            img, cfg.cascade_unet, model.params, f"cascade{_t}.cnn.")
        g = refinement_term(k, smaps, cnn)
        k = FK.dc_step(k, k_masked, mask, model.params[f"cascade{t}.eta"], g)
    intermediate = FK.magnitude(FK.reduce(FK.ifft2c(k), smaps))
    return k, smaps, intermediate


def forward_e2e_varnet(model: Model, k_masked: Tensor, mask) -> ReconstructionOutput:
    k, _, intermediate = _unrolled(model, k_masked, mask)
    h, w = intermediate.shape[1], intermediate.shape[2]
    img = intermediate.reshape((h, w))
    return ReconstructionOutput(intermediate=img, final=img, k_final=k)


def forward_atthybrid(model: Model, k_masked: Tensor, mask) -> ReconstructionOutput:
    """Cascades with attention CNNs, then residual image refinement.

    final = relu(intermediate + UNet(intermediate)): the relu keeps the
    output a valid magnitude image and is exact identity at zero init
    because the intermediate is nonnegative.
    """
    k, _, intermediate = _unrolled(model, k_masked, mask)
    refined = intermediate + unet_forward(
        intermediate, model.config.unet, model.params, "refine.")
    refined = T.relu(refined)
    h, w = intermediate.shape[1], intermediate.shape[2]
    return ReconstructionOutput(
        intermediate=intermediate.reshape((h, w)),
        final=refined.reshape((h, w)),
        k_final=k,
    )


def zero_filled(k_masked: Tensor) -> Tensor:
    """RSS of the inverse FFT of the measured k-space, as [H, W]."""
    img = FK.rss(FK.ifft2c(k_masked))
    return img.reshape((img.shape[1], img.shape[2]))


def run_model(model: Model, k_masked: Tensor, mask) -> ReconstructionOutput:
    """Dispatch any architecture to a ReconstructionOutput."""
    arch = model.config.arch
    if arch == "unet":
        zf = FK.rss(FK.ifft2c(k_masked))
        out = forward_unet(model, zf)
        h, w = out.shape[1], out.shape[2]
        return ReconstructionOutput(
            intermediate=zf.reshape((h, w)), final=out.reshape((h, w)), k_final=None)
    if arch == "wnet":
        k_refined, intermediate, image = forward_wnet(model, k_masked)
        h, w = image.shape[1], image.shape[2]
        return ReconstructionOutput(
            intermediate=intermediate.reshape((h, w)),
            final=image.reshape((h, w)), k_final=k_refined)
    if arch == "e2e-varnet":
        return forward_e2e_varnet(model, k_masked, mask)
    if arch == "atthybrid-varnet":
        return forward_atthybrid(model, k_masked, mask)
    raise ValueError(f"unknown arch {arch!r}")
