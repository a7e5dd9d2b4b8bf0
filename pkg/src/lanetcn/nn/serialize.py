"""Binary model container.

Layout (all little-endian)::

    b"LTCN" | u32 format version
    u32 family code | u32 input_dim | u32 output_dim | u32 horizon
    u32 input_length | u32 levels | u32 channels | u32 kernel_size
    f64 dropout
    u32 parameter count
    per parameter, in declaration order: u32 ndim | u32 dims... | f64 payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from .models import FAMILIES, ModelSpec, param_shapes

MAGIC = b"LTCN"
FORMAT_VERSION = 1
_INT_FIELDS = ("input_dim", "output_dim", "horizon", "input_length", "levels", "channels", "kernel_size")


def dumps(spec: ModelSpec, params: dict[str, np.ndarray]) -> bytes:
    expected = param_shapes(spec)
    if list(expected) != list(params):
        raise ParameterError("parameter names/order do not match the spec")
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    out.append(struct.pack("<8I", FAMILIES.index(spec.family), *(getattr(spec, f) for f in _INT_FIELDS)))
    out.append(struct.pack("<d", spec.dropout))
    out.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        if arr.shape != expected[name]:
            raise ParameterError(f"{name} has shape {arr.shape}, spec expects {expected[name]}")
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def loads(blob: bytes) -> tuple[ModelSpec, dict[str, np.ndarray]]:
    try:
        return _loads(blob)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"truncated or malformed model file: {exc}") from exc


def _loads(blob: bytes) -> tuple[ModelSpec, dict[str, np.ndarray]]:
    if blob[:4] != MAGIC:
        raise ParameterError("not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise ParameterError(f"unsupported model format version {version}")
    off = 8
    fam, *ints = struct.unpack_from("<8I", blob, off)
    off += 32
    (dropout,) = struct.unpack_from("<d", blob, off)
    off += 8
    if fam >= len(FAMILIES):
        raise ParameterError(f"unknown family code {fam}")
    spec = ModelSpec(FAMILIES[fam], *ints, dropout=dropout)
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    shapes = param_shapes(spec)
    if count != len(shapes):
        raise ParameterError(f"file holds {count} tensors, spec needs {len(shapes)}")
    params = {}
    for name, shape in shapes.items():
        (ndim,) = struct.unpack_from("<I", blob, off)
        dims = struct.unpack_from(f"<{ndim}I", blob, off + 4)
        off += 4 + 4 * ndim
        if tuple(dims) != shape:
            raise ParameterError(f"{name}: stored shape {dims} != expected {shape}")
        size = int(np.prod(dims))
        params[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=off).astype(np.float64).reshape(dims)
        off += 8 * size
    if off != len(blob):
        raise ParameterError("trailing bytes after last tensor")
    return spec, params


def save_model(path, spec: ModelSpec, params) -> None:
    Path(path).write_bytes(dumps(spec, params))


def load_model(path) -> tuple[ModelSpec, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
