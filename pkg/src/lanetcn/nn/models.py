"""TCN and the two baselines (Elman RNN, plain causal CNN) over a shared linear head.

Parameters live in an ordered ``dict[str, ndarray]``; insertion order is the
declaration order used by serialization. Each forward returns ``(y_hat, cache)``
and :func:`model_backward` turns the cache plus ``dL/dy_hat`` into gradients.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError, StateError
from .layers import (
    BlockCache,
    ConvLayer,
    ResidualBlock,
    causal_conv_backward,
    causal_conv_forward,
    dropout_backward,
    dropout_forward,
    relu_backward,
    relu_forward,
    residual_block_backward,
    residual_block_forward,
)

FAMILIES = ("tcn", "rnn", "cnn")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    input_dim: int
    output_dim: int
    horizon: int
    input_length: int
    levels: int = 4
    channels: int = 32
    kernel_size: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"family must be one of {FAMILIES}, got {self.family!r}")
        for name in ("input_dim", "output_dim", "horizon", "input_length", "levels", "channels", "kernel_size"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.family == "rnn" and self.levels != 1:
            raise ParameterError("the RNN baseline is single-layer; set levels=1 (hidden size is `channels`)")

    @property
    def dilations(self) -> list[int]:
        if self.family == "tcn":
            return [2**i for i in range(self.levels)]
        return [1] * self.levels

    def to_dict(self) -> dict:
        return asdict(self)


def default_spec(family: str, input_dim: int, output_dim: int, horizon: int, input_length: int, **overrides) -> ModelSpec:
    """Desk-scale defaults: 4-block TCN, an 8-layer CNN with the same conv count, 32-unit RNN."""
    levels = {"tcn": 4, "cnn": 8, "rnn": 1}[family]
    kw = dict(levels=levels, channels=32, kernel_size=2, dropout=0.1)
    kw.update(overrides)
    return ModelSpec(family, input_dim, output_dim, horizon, input_length, **kw)


def receptive_field(spec: ModelSpec) -> int:
    if spec.family != "tcn":
        raise ParameterError("receptive_field is defined for TCN specs only")
    return 1 + sum(2 * (spec.kernel_size - 1) * 2**i for i in range(spec.levels))


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases."""
    p: dict[str, np.ndarray] = {}
    k, C = spec.kernel_size, spec.channels
    if spec.family == "tcn":
        c_in = spec.input_dim
        for i in range(spec.levels):
            p[f"block{i}.conv1.weight"] = _uniform(rng, (C, c_in, k), c_in * k)
            p[f"block{i}.conv1.bias"] = np.zeros(C)
            p[f"block{i}.conv2.weight"] = _uniform(rng, (C, C, k), C * k)
            p[f"block{i}.conv2.bias"] = np.zeros(C)
            if c_in != C:
                p[f"block{i}.shortcut.weight"] = _uniform(rng, (C, c_in, 1), c_in)
                p[f"block{i}.shortcut.bias"] = np.zeros(C)
            c_in = C
    elif spec.family == "cnn":
        c_in = spec.input_dim
        for i in range(spec.levels):
            p[f"conv{i}.weight"] = _uniform(rng, (C, c_in, k), c_in * k)
            p[f"conv{i}.bias"] = np.zeros(C)
            c_in = C
    else:
        p["rnn.w_x"] = _uniform(rng, (C, spec.input_dim), spec.input_dim)
        p["rnn.w_h"] = _uniform(rng, (C, C), C)
        p["rnn.bias"] = np.zeros(C)
    n_out = spec.horizon * spec.output_dim
    p["head.weight"] = _uniform(rng, (n_out, C), C)
    p["head.bias"] = np.zeros(n_out)
    return p


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_params(spec, np.random.default_rng(0)).items()}


def tcn_blocks(spec: ModelSpec, params) -> list[ResidualBlock]:
    blocks = []
    for i, d in enumerate(spec.dilations):
        pre = f"block{i}"
        shortcut = None
        if f"{pre}.shortcut.weight" in params:
            shortcut = ConvLayer(params[f"{pre}.shortcut.weight"], params[f"{pre}.shortcut.bias"], 1)
        blocks.append(
            ResidualBlock(
                ConvLayer(params[f"{pre}.conv1.weight"], params[f"{pre}.conv1.bias"], d),
                ConvLayer(params[f"{pre}.conv2.weight"], params[f"{pre}.conv2.bias"], d),
                spec.dropout,
                shortcut,
            )
        )
    return blocks


@dataclass
class ModelCache:
    family: str
    spec: ModelSpec
    params: dict
    snapshot: dict
    x: np.ndarray
    squeeze: bool
    layers: list = field(default_factory=list)
    last: np.ndarray | None = None
    head_mask: np.ndarray | None = None
    out_shape: tuple = ()

    def activations(self) -> list[np.ndarray]:
        """Every intermediate activation in forward order, each [C, N, n] (for probes)."""
        acts = []
        for item in self.layers:
            if isinstance(item, BlockCache):
                acts += [item.h1, item.d1, item.h2, relu_forward(item.z)]
            elif isinstance(item, tuple):
                acts += [a for a in item if isinstance(a, np.ndarray) and a.ndim == 3]
            else:
                acts.append(item)
        return acts


def _prepare(x, spec: ModelSpec, family: str):
    if spec.family != family:
        raise ParameterError(f"spec family {spec.family!r} used with {family}_forward")
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != spec.input_dim or x.shape[2] != spec.input_length:
        raise ShapeError(
            f"expected input [N, {spec.input_dim}, {spec.input_length}], got {x.shape if not squeeze else x.shape[1:]}"
        )
    return x, squeeze


def _head_forward(last, spec: ModelSpec, params, cache: ModelCache):
    y = last @ params["head.weight"].T + params["head.bias"]
    y = y.reshape(len(last), spec.horizon, spec.output_dim)
    cache.last = last
    cache.out_shape = y.shape
    return (y[0] if cache.squeeze else y), cache


def tcn_forward(x, spec: ModelSpec, params, mode="eval", rng=None):
    x, squeeze = _prepare(x, spec, "tcn")
    cache = ModelCache("tcn", spec, params, dict(params), x, squeeze)
    h = np.ascontiguousarray(x.transpose(1, 0, 2))
    for block in tcn_blocks(spec, params):
        h, bc = residual_block_forward(h, block, mode, rng)
        cache.layers.append(bc)
    return _head_forward(h[:, :, -1].T, spec, params, cache)


def cnn_forward(x, spec: ModelSpec, params, mode="eval", rng=None):
    x, squeeze = _prepare(x, spec, "cnn")
    cache = ModelCache("cnn", spec, params, dict(params), x, squeeze)
    h = np.ascontiguousarray(x.transpose(1, 0, 2))
    for i in range(spec.levels):
        layer = ConvLayer(params[f"conv{i}.weight"], params[f"conv{i}.bias"], 1)
        z = causal_conv_forward(h, layer)
        a, mask = dropout_forward(relu_forward(z), spec.dropout, mode, rng)
        cache.layers.append((h, z, mask, a))
        h = a
    return _head_forward(h[:, :, -1].T, spec, params, cache)


def rnn_forward(x, spec: ModelSpec, params, mode="eval", rng=None):
    """Elman recurrence h_t = tanh(W_x x_t + W_h h_{t-1} + b), h_0 = 0."""
    x, squeeze = _prepare(x, spec, "rnn")
    cache = ModelCache("rnn", spec, params, dict(params), x, squeeze)
    N, _, L = x.shape
    H = spec.channels
    w_h, b = params["rnn.w_h"], params["rnn.bias"]
    xw = np.matmul(params["rnn.w_x"], x)  # [N, H, L]
    hs = np.zeros((N, H, L + 1))
    for t in range(L):
        hs[:, :, t + 1] = np.tanh(xw[:, :, t] + hs[:, :, t] @ w_h.T + b)
    cache.layers.append(hs)
    last, mask = dropout_forward(hs[:, :, L], spec.dropout, mode, rng)
    cache.head_mask = mask
    return _head_forward(last, spec, params, cache)


_FORWARD = {"tcn": tcn_forward, "cnn": cnn_forward, "rnn": rnn_forward}


def forward(x, spec: ModelSpec, params, mode="eval", rng=None):
    return _FORWARD[spec.family](x, spec, params, mode, rng)


def _check_cache(cache: ModelCache, grad_y):
    if set(cache.params) != set(cache.snapshot) or any(cache.params[k] is not v for k, v in cache.snapshot.items()):
        raise StateError("parameters changed since the forward pass; cache is stale")
    g = np.asarray(grad_y, dtype=np.float64)
    if cache.squeeze:
        g = g[None]
    if g.shape != cache.out_shape:
        raise StateError(f"gradient shape {g.shape} does not match forward output {cache.out_shape}")
    return g


def model_backward(cache: ModelCache, grad_y_hat) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Reverse-mode gradients ``(param_grads, grad_x)`` for the forward that produced ``cache``."""
    g = _check_cache(cache, grad_y_hat)
    spec, params = cache.spec, cache.params
    N = g.shape[0]
    gy = g.reshape(N, -1)
    grads: dict[str, np.ndarray] = {}
    grads["head.weight"] = gy.T @ cache.last
    grads["head.bias"] = gy.sum(axis=0)
    g_last = gy @ params["head.weight"]

    if cache.family == "rnn":
        hs = cache.layers[0]
        L = hs.shape[2] - 1
        w_h = params["rnn.w_h"]
        gh = dropout_backward(cache.head_mask, g_last)
        ga_all = np.zeros((N, spec.channels, L))
        g_wh = np.zeros_like(w_h)
        for t in range(L - 1, -1, -1):
            ga = gh * (1.0 - hs[:, :, t + 1] ** 2)
            ga_all[:, :, t] = ga
            g_wh += ga.T @ hs[:, :, t]
            gh = ga @ w_h
        grads["rnn.w_x"] = np.tensordot(ga_all, cache.x, axes=([0, 2], [0, 2]))
        grads["rnn.w_h"] = g_wh
        grads["rnn.bias"] = ga_all.sum(axis=(0, 2))
        gx = np.matmul(params["rnn.w_x"].T, ga_all)
    else:
        n = cache.x.shape[2]
        gh = np.zeros((spec.channels, N, n))
        gh[:, :, -1] = g_last.T
        if cache.family == "tcn":
            blocks = tcn_blocks(spec, params)
            for i in range(len(blocks) - 1, -1, -1):
                gh, bg = residual_block_backward(blocks[i], cache.layers[i], gh)
                for part, (gw, gb) in bg.items():
                    grads[f"block{i}.{part}.weight"] = gw
                    grads[f"block{i}.{part}.bias"] = gb
        else:
            for i in range(spec.levels - 1, -1, -1):
                h_in, z, mask, _ = cache.layers[i]
                layer = ConvLayer(params[f"conv{i}.weight"], params[f"conv{i}.bias"], 1)
                gz = relu_backward(z, dropout_backward(mask, gh))
                gh, gw, gb = causal_conv_backward(h_in, layer, gz)
                grads[f"conv{i}.weight"] = gw
                grads[f"conv{i}.bias"] = gb
        gx = gh.transpose(1, 0, 2)

    ordered = {k: grads[k] for k in params}
    return ordered, (gx[0] if cache.squeeze else gx)
