"""Layer primitives with explicit forward and backward passes.

Activations are channel-major: ``[channels, time]`` for one sequence or
``[channels, batch, time]`` for a batch. Keeping channels first lets every
convolution run as a single GEMM over all (sample, step) columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError


@dataclass
class ConvLayer:
    weight: np.ndarray  # [C_out, C_in, k]
    bias: np.ndarray  # [C_out]
    dilation: int = 1

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 3:
            raise ShapeError(f"conv weight must be [C_out, C_in, k], got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} outputs")
        if int(self.dilation) < 1:
            raise ParameterError(f"dilation must be >= 1, got {self.dilation}")
        self.dilation = int(self.dilation)

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]


def _as_cbn(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[:, None, :], True
    if x.ndim != 3:
        raise ShapeError(f"expected [C, n] or [C, N, n], got shape {x.shape}")
    return x, False


def _taps(x: np.ndarray, k: int, d: int) -> np.ndarray:
    """Stack the k dilated, left-zero-padded shifts of x: [C, N, n] -> [C*k, N*n]."""
    C, N, n = x.shape
    cols = np.zeros((C, k, N, n))
    for i in range(k):
        s = d * i
        if s < n:
            cols[:, i, :, s:] = x[:, :, : n - s]
    return cols.reshape(C * k, N * n)


def causal_conv_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """out[o, s] = bias[o] + sum_c sum_i w[o, c, i] * x[c, s - d*i], zero for negative indices."""
    xb, squeeze = _as_cbn(x)
    C, N, n = xb.shape
    if C != layer.in_channels:
        raise ShapeError(f"input has {C} channels, layer expects {layer.in_channels}")
    cols = _taps(xb, layer.kernel_size, layer.dilation)
    out = layer.weight.reshape(layer.out_channels, -1) @ cols
    out += layer.bias[:, None]
    out = out.reshape(layer.out_channels, N, n)
    return out[:, 0] if squeeze else out


def causal_conv_backward(x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray):
    """Return ``(grad_x, grad_weight, grad_bias)`` for one causal conv."""
    xb, squeeze = _as_cbn(x)
    gb, _ = _as_cbn(grad_out)
    C, N, n = xb.shape
    k, d, O = layer.kernel_size, layer.dilation, layer.out_channels
    if C != layer.in_channels or gb.shape != (O, N, n):
        raise ShapeError(f"grad_out {gb.shape} inconsistent with input {xb.shape} and layer")
    cols = _taps(xb, k, d)
    g2 = gb.reshape(O, N * n)
    grad_w = (g2 @ cols.T).reshape(layer.weight.shape)
    grad_b = g2.sum(axis=1)
    gcols = (layer.weight.reshape(O, -1).T @ g2).reshape(C, k, N, n)
    grad_x = gcols[:, 0].copy()
    for i in range(1, k):
        s = d * i
        if s < n:
            grad_x[:, :, : n - s] += gcols[:, i, :, s:]
    return (grad_x[:, 0] if squeeze else grad_x), grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if np.shape(x) != np.shape(grad_out):
        raise ShapeError(f"shape mismatch {np.shape(x)} vs {np.shape(grad_out)}")
    # subgradient at exactly 0 is 0
    return grad_out * (np.asarray(x) > 0)


def dropout_forward(x: np.ndarray, rate: float, mode: str = "eval", rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(out, mask)``; the mask already holds the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if mode == "eval" or rate == 0.0:
        mask = np.ones_like(x)
        return x.copy(), mask
    if mode != "train":
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ParameterError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape, dtype=np.float32) >= rate) * (1.0 / (1.0 - rate))
    return x * mask, mask


def dropout_backward(mask: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if np.shape(mask) != np.shape(grad_out):
        raise ShapeError(f"shape mismatch {np.shape(mask)} vs {np.shape(grad_out)}")
    return grad_out * mask


@dataclass
class ResidualBlock:
    conv1: ConvLayer
    conv2: ConvLayer
    dropout: float = 0.0
    shortcut: ConvLayer | None = None

    def __post_init__(self):
        if self.conv1.dilation != self.conv2.dilation:
            raise ParameterError("both convolutions of a block share one dilation")
        if self.conv2.in_channels != self.conv1.out_channels:
            raise ShapeError("conv2 input channels must equal conv1 output channels")
        needs_shortcut = self.conv1.in_channels != self.conv2.out_channels
        if needs_shortcut != (self.shortcut is not None):
            raise ParameterError("a 1x1 shortcut is required exactly when channel counts differ")
        if self.shortcut is not None and (
            self.shortcut.kernel_size != 1
            or self.shortcut.in_channels != self.conv1.in_channels
            or self.shortcut.out_channels != self.conv2.out_channels
        ):
            raise ShapeError("shortcut must be a 1x1 conv from block input to block output channels")

    @property
    def in_channels(self) -> int:
        return self.conv1.in_channels

    @property
    def out_channels(self) -> int:
        return self.conv2.out_channels


@dataclass
class BlockCache:
    x: np.ndarray
    h1: np.ndarray
    mask1: np.ndarray
    d1: np.ndarray
    h2: np.ndarray
    mask2: np.ndarray
    z: np.ndarray


def residual_block_forward(x, block: ResidualBlock, mode="eval", rng=None):
    """out = ReLU(shortcut(x) + Dropout(ReLU(Conv2(Dropout(ReLU(Conv1(x)))))))."""
    xb, squeeze = _as_cbn(x)
    if xb.shape[0] != block.in_channels:
        raise ShapeError(f"input has {xb.shape[0]} channels, block expects {block.in_channels}")
    h1 = causal_conv_forward(xb, block.conv1)
    d1, mask1 = dropout_forward(relu_forward(h1), block.dropout, mode, rng)
    h2 = causal_conv_forward(d1, block.conv2)
    d2, mask2 = dropout_forward(relu_forward(h2), block.dropout, mode, rng)
    res = xb if block.shortcut is None else causal_conv_forward(xb, block.shortcut)
    z = res + d2
    out = relu_forward(z)
    cache = BlockCache(xb, h1, mask1, d1, h2, mask2, z)
    return (out[:, 0] if squeeze else out), cache


def residual_block_backward(block: ResidualBlock, cache: BlockCache, grad_out: np.ndarray):
    """Return ``(grad_x, grads)`` where grads maps conv1/conv2/shortcut to (grad_w, grad_b)."""
    gb, squeeze = _as_cbn(grad_out)
    gz = relu_backward(cache.z, gb)
    grads = {}
    if block.shortcut is None:
        gx = gz.copy()
    else:
        gx, gw, gbias = causal_conv_backward(cache.x, block.shortcut, gz)
        grads["shortcut"] = (gw, gbias)
    g = relu_backward(cache.h2, dropout_backward(cache.mask2, gz))
    g, gw, gbias = causal_conv_backward(cache.d1, block.conv2, g)
    grads["conv2"] = (gw, gbias)
    g = relu_backward(cache.h1, dropout_backward(cache.mask1, g))
    g, gw, gbias = causal_conv_backward(cache.x, block.conv1, g)
    grads["conv1"] = (gw, gbias)
    gx = gx + g
    return (gx[:, 0] if squeeze else gx), grads
