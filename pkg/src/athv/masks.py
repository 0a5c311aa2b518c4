"""Undersampling mask generators.

Two families: 1-D Cartesian column masks with a fully sampled center band
(the 4x and 8x setting) and 2-D Gaussian-density point masks (20x and 30x).
All integer budgets use round-half-away-from-zero so the sampled counts are
exact and testable; masks are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import numpy as np

from .fourier import Mask, round_half_away, _centered_span


class MaskBudgetError(ValueError):
    """The center region does not fit inside the sampling budget."""


def cartesian_mask(h: int, w: int, accel: int, center_fraction: float,
                   kind: str = "random", seed: int = 0) -> Mask:
    """Column mask: round(w*cf) central columns plus random or equispaced
    extras, round(w/accel) sampled columns in total."""
    if accel < 1 or not (0.0 <= center_fraction <= 1.0):
        raise ValueError(f"need accel >= 1 and 0 <= cf <= 1, got {accel}, {center_fraction}")
    if kind not in ("random", "equispaced"):
        raise ValueError(f"cartesian kind must be random or equispaced, got {kind!r}")
    n_total = round_half_away(w / accel)
    n_center = round_half_away(w * center_fraction)
    if n_center > n_total:
        raise MaskBudgetError(
            f"{n_center} center columns exceed the {n_total}-column budget at {accel}x")
    cols = np.zeros(w, dtype=bool)
    cols[_centered_span(w, n_center)] = True
    candidates = np.flatnonzero(~cols)
    n_extra = n_total - n_center
    if n_extra > 0:
        if kind == "random":
            picked = np.random.default_rng(seed).choice(candidates, size=n_extra, replace=False)
        else:
            # deterministic stride through the candidate list
            picked = candidates[(np.arange(n_extra) * len(candidates)) // n_extra]
        cols[picked] = True
    pattern = np.repeat(cols[None, :], h, axis=0).astype(np.float32)
    return Mask(pattern, accel, center_fraction, f"cartesian-{kind}", seed)


def gaussian2d_mask(h: int, w: int, accel: int, center_fraction: float = 0.04,
                    sigma_scale: float = 0.25, seed: int = 0) -> Mask:
    """2-D point mask: a fully sampled central square of side
    round(sqrt(h*w)*cf), plus round(h*w/accel) - side^2 points drawn without
    replacement with probability proportional to exp(-d^2 / (2 sigma^2)),
    sigma = sigma_scale * min(h, w), d the distance from (h//2, w//2)."""
    if accel < 1:
        raise ValueError(f"need accel >= 1, got {accel}")
    n_total = round_half_away(h * w / accel)
    side = round_half_away(np.sqrt(h * w) * center_fraction)
    if side * side > n_total:
        raise MaskBudgetError(
            f"{side}x{side} center square exceeds the {n_total}-point budget at {accel}x")
    pattern = np.zeros((h, w), dtype=bool)
    pattern[_centered_span(h, side), _centered_span(w, side)] = True
    n_extra = n_total - side * side
    if n_extra > 0:
        yy, xx = np.nonzero(~pattern)
        d2 = (yy - h // 2) ** 2.0 + (xx - w // 2) ** 2.0
        sigma = sigma_scale * min(h, w)
        p = np.exp(-d2 / (2.0 * sigma * sigma))
        p /= p.sum()
        idx = np.random.default_rng(seed).choice(len(yy), size=n_extra, replace=False, p=p)
        pattern[yy[idx], xx[idx]] = True
    return Mask(pattern.astype(np.float32), accel, center_fraction, "gaussian2d", seed)
