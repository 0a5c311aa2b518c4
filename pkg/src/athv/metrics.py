"""Training loss and evaluation metrics, plus the reader-study priority score.

All quality metrics use the ground truth's dynamic range (max - min) as
their normalization, matching the NRMSE definition the loss trains against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError


class DegenerateRangeWarning(UserWarning):
    """The reference image is constant; range-normalized metrics degenerate."""


_EPS = 1e-11


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _target_range(x: np.ndarray) -> float:
    rng = float(x.max() - x.min())
    if rng == 0.0:
        warnings.warn("reference image has zero dynamic range", DegenerateRangeWarning)
    return rng


def nrmse(x, xhat) -> float:
    """sqrt(mean((x - xhat)^2)) / (max(x) - min(x) + eps)."""
    xd, yd = _as_array(x), _as_array(xhat)
    if xd.shape != yd.shape:
        raise ShapeError(f"nrmse shape mismatch: {xd.shape} vs {yd.shape}")
    if xd.size == 0:
        raise ShapeError("nrmse of empty arrays")
    denom = _target_range(xd) + _EPS
    return float(np.sqrt(np.mean((xd.astype(np.float64) - yd) ** 2)) / denom)


def nrmse_loss(x, xhat: Tensor) -> Tensor:
    """Differentiable NRMSE of a prediction against a fixed target."""
    xd = _as_array(x)
    if xd.shape != xhat.shape:
        raise ShapeError(f"nrmse shape mismatch: {xd.shape} vs {xhat.shape}")
    denom = _target_range(xd) + _EPS
    diff = xhat - Tensor(xd.astype(xhat.dtype))
    return T.sqrt((diff * diff).mean()) / denom


def dual_loss(x, xhat_int: Tensor, xhat_final: Tensor, alpha: float = 1.0) -> Tensor:
    """L = NRMSE(x, x_int) + alpha * NRMSE(x, x_final)."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    loss = nrmse_loss(x, xhat_int)
    if alpha != 0.0:
        loss = loss + alpha * nrmse_loss(x, xhat_final)
    return loss


def psnr(x, xhat) -> float:
    """10 log10(peak^2 / MSE), peak = max(x) - min(x); capped at 200 dB."""
    xd, yd = _as_array(x), _as_array(xhat)
    if xd.shape != yd.shape:
        raise ShapeError(f"psnr shape mismatch: {xd.shape} vs {yd.shape}")
    mse = float(np.mean((xd.astype(np.float64) - yd) ** 2))
    if mse < 1e-20:
        return 200.0
    peak = _target_range(xd)
    if peak == 0.0:
        return float("-inf")
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(x, xhat, window: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM, uniform window, biased moments, valid positions only."""
    xd = _as_array(x).astype(np.float64)
    yd = _as_array(xhat).astype(np.float64)
    if xd.shape != yd.shape:
        raise ShapeError(f"ssim shape mismatch: {xd.shape} vs {yd.shape}")
    if xd.ndim != 2:
        raise ShapeError(f"ssim expects 2-D images, got {xd.shape}")
    if min(xd.shape) < window:
        raise ValueError(f"image {xd.shape} smaller than the {window}x{window} window")
    dr = _target_range(xd)
    if dr == 0.0:
        return 1.0 if np.array_equal(xd, yd) else 0.0
    c1, c2 = (k1 * dr) ** 2, (k2 * dr) ** 2
    win = (window, window)
    wx = np.lib.stride_tricks.sliding_window_view(xd, win)
    wy = np.lib.stride_tricks.sliding_window_view(yd, win)
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    vx = (wx * wx).mean(axis=(-2, -1)) - mx * mx
    vy = (wy * wy).mean(axis=(-2, -1)) - my * my
    cov = (wx * wy).mean(axis=(-2, -1)) - mx * my
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(s.mean())


# -- reader-study priority score ------------------------------------------------


@dataclass
class RankingRecord:
    """Preference ranks (1 = most preferred) for one slice."""

    slice_id: str
    ranks: dict

    def validate(self) -> None:
        n = len(self.ranks)
        if n == 0:
            raise ValueError(f"record {self.slice_id}: no ranks")
        if sorted(self.ranks.values()) != list(range(1, n + 1)):
            raise ValueError(
                f"record {self.slice_id}: ranks {sorted(self.ranks.values())} "
                f"are not a permutation of 1..{n}")


def priority_score(records, model: str) -> float:
    """(N_c + 1 - mean rank) / N_c over all records."""
    if not records:
        raise ValueError("no ranking records")
    n_candidates = len(records[0].ranks)
    total = 0
    for r in records:
        if len(r.ranks) != n_candidates:
            raise ValueError(f"record {r.slice_id}: inconsistent candidate count")
        if model not in r.ranks:
            raise ValueError(f"record {r.slice_id} does not rank model {model!r}")
        total += r.ranks[model]
    mean_rank = total / len(records)
    return (n_candidates + 1 - mean_rank) / n_candidates


def parse_ranking_line(line: str) -> RankingRecord:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) < 2:
        raise ValueError(f"malformed ranking line: {line!r}")
    ranks = {}
    for pair in parts[1:]:
        if "=" not in pair:
            raise ValueError(f"malformed rank entry {pair!r} in line {line!r}")
        name, value = pair.split("=", 1)
        name = name.strip()
        if name in ranks:
            raise ValueError(f"model {name!r} ranked twice in line {line!r}")
        try:
            ranks[name] = int(value)
        except ValueError:
            raise ValueError(f"non-integer rank {value!r} in line {line!r}") from None
    record = RankingRecord(parts[0], ranks)
    record.validate()
    return record


def parse_ranking_file(path) -> list:
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                records.append(parse_ranking_line(line))
    if not records:
        raise ValueError(f"ranking file {path} has no records")
    return records


def format_ranking_line(record: RankingRecord) -> str:
    pairs = ",".join(f"{m}={r}" for m, r in record.ranks.items())
    return f"{record.slice_id},{pairs}"


def ranking_table(records) -> list:
    """[(model, raw rank sum, priority score)] in first-record model order."""
    models = list(records[0].ranks)
    return [(m, sum(r.ranks[m] for r in records), priority_score(records, m))
            for m in models]
