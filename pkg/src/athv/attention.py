"""Channel and spatial attention with max-out fusion.

The channel branch squeezes the feature map to one value per channel
(global average), runs it through a C -> C/2 -> C bottleneck, and gates each
channel with a sigmoid score. The spatial branch gates each pixel with a
sigmoid of a 1x1 convolution across channels. The layer output is the
pointwise maximum of the two gated maps, so for nonnegative activations it
can only attenuate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError, kaiming_uniform


@dataclass
class AttentionParams:
    """Parameter bundle for one attention layer over C channels.

    fc1: [C/2, C] (+bias), fc2: [C, C/2] (+bias), conv: [1, C, 1, 1] (+bias).
    """

    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor
    conv_w: Tensor
    conv_b: Tensor

    @property
    def channels(self) -> int:
        return self.fc1_w.shape[1]

    def tensors(self) -> dict:
        return {
            "fc1.weight": self.fc1_w, "fc1.bias": self.fc1_b,
            "fc2.weight": self.fc2_w, "fc2.bias": self.fc2_b,
            "conv.weight": self.conv_w, "conv.bias": self.conv_b,
        }


def init_attention(rng: np.random.Generator, channels: int) -> AttentionParams:
    if channels % 2 != 0:
        raise ShapeError(f"attention needs an even channel count, got {channels}")
    half = channels // 2
    mk = lambda shape, fan_in: Tensor(kaiming_uniform(rng, shape, fan_in), requires_grad=True)
    zeros = lambda shape: Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)
    return AttentionParams(
        fc1_w=mk((half, channels), channels), fc1_b=zeros(half),
        fc2_w=mk((channels, half), half), fc2_b=zeros(channels),
        conv_w=mk((1, channels, 1, 1), channels), conv_b=zeros(1),
    )


def _check(x: Tensor, p: AttentionParams) -> None:
    if x.ndim != 3 or x.shape[0] != p.channels:
        raise ShapeError(f"attention over {p.channels} channels got input {x.shape}")


def channel_attention(x: Tensor, p: AttentionParams):
    """Returns (s_c, y_c): per-channel scores in (0,1) and the gated map."""
    _check(x, p)
    z = T.global_avg_pool(x)
    s_c = T.sigmoid(T.linear(T.relu(T.linear(z, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b))
    y_c = x * s_c.reshape((p.channels, 1, 1))
    return s_c, y_c


def spatial_attention(x: Tensor, p: AttentionParams):
    """Returns (s_s, y_s): per-pixel scores in (0,1) and the gated map."""
    _check(x, p)
    s_s = T.sigmoid(T.conv2d(x, p.conv_w, p.conv_b))
    return s_s, x * s_s


def attention_forward(x: Tensor, p: AttentionParams) -> Tensor:
    """max(y_c, y_s), elementwise."""
    _, y_c = channel_attention(x, p)
    _, y_s = spatial_attention(x, p)
    return T.maximum(y_c, y_s)
