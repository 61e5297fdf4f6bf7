"""Binary checkpoint files.

Layout::

    b"FVKCKPT1"                      8-byte magic
    uint32 little-endian             header length in bytes
    header                           UTF-8 JSON, keys sorted
    parameter data                   little-endian float32, manifest order

The header carries the model configuration, the parameter manifest
(name and shape per tensor), the optimizer step counter and a free-form
``meta`` mapping (preprocessing settings, training image size).
"""

import json
import os
import struct
from collections import OrderedDict

import numpy as np

from .errors import CheckpointError, CorruptCheckpointError
from .tensor import Tensor
from .unet import ParameterSet, UNetConfig, parameter_shapes

MAGIC = b"FVKCKPT1"
_LEN = struct.Struct("<I")


def checkpoint_bytes(params, step=0, meta=None):
    manifest = [[name, list(t.shape)] for name, t in params.items()]
    header = {
        "config": params.config.to_dict(),
        "manifest": manifest,
        "meta": meta or {},
        "step": int(step),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, _LEN.pack(len(head)), head]
    for _, t in params.items():
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_checkpoint(params, path, step=0, meta=None):
    payload = checkpoint_bytes(params, step, meta)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
    return path


def parse_checkpoint(blob):
    """Decode checkpoint bytes into ``(params, header)``; nothing is returned
    unless the whole file validates."""
    if len(blob) < len(MAGIC) + _LEN.size or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not an fvkit checkpoint (bad magic or version)")
    (hlen,) = _LEN.unpack_from(blob, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if start + hlen > len(blob):
        raise CorruptCheckpointError("checkpoint truncated inside the header")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
        config = UNetConfig(**header["config"])
        manifest = header["manifest"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"unreadable checkpoint header: {exc}") from exc

    expected = parameter_shapes(config)
    if len(manifest) != len(expected):
        raise CorruptCheckpointError(
            f"manifest lists {len(manifest)} tensors, configuration implies {len(expected)}"
        )
    for (name, shape), (want_name, want_shape) in zip(manifest, expected):
        if name != want_name or tuple(shape) != want_shape:
            raise CorruptCheckpointError(
                f"parameter {name!r} has shape {tuple(shape)} in the manifest; "
                f"configuration requires {want_name!r} with shape {want_shape}"
            )

    body = blob[start + hlen:]
    need = 4 * sum(int(np.prod(s)) for _, s in expected)
    if len(body) != need:
        raise CorruptCheckpointError(
            f"parameter data is {len(body)} bytes, manifest requires {need}"
        )
    tensors = OrderedDict()
    offset = 0
    for name, shape in expected:
        count = int(np.prod(shape))
        data = np.frombuffer(body, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        trainable = not name.endswith((".rmean", ".rvar"))
        tensors[name] = Tensor(data.astype(np.float32).reshape(shape),
                               requires_grad=trainable)
    return ParameterSet(config, tensors), header


def load_checkpoint(path, with_header=False):
    with open(path, "rb") as fh:
        blob = fh.read()
    params, header = parse_checkpoint(blob)
    return (params, header) if with_header else params
