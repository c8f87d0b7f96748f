"""Binary container for networks, weights and inputs.

Layout::

    magic      b"PHWY"
    u32 LE     manifest length in bytes
    manifest   UTF-8 JSON, keys sorted
    payload    tensors back to back, little-endian float32, row-major

The manifest holds ``format_version``, ``kind`` (``residual_net``,
``lstm_weights`` or ``tensors``), ``config`` and ``tensors``: a list of
``{name, shape, offset, length}`` entries, with offsets relative to the
start of the payload.
"""

import json
import struct

import numpy as np

from . import lstmcell, resblocks
from .tensorcore import freeze

MAGIC = b"PHWY"
FORMAT_VERSION = 1
KINDS = ("residual_net", "lstm_weights", "tensors")
MANIFEST_KEYS = {"format_version", "kind", "config", "tensors"}
ENTRY_KEYS = {"name", "shape", "offset", "length"}
_LSTM_PARTS = ("w_ih", "w_hh", "b_ih", "b_hh")


class ContainerError(ValueError):
    """Malformed or incompatible container; ``offset`` locates the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


def _encode(kind, config, named):
    entries, blobs, offset = [], [], 0
    for name, arr in named:
        arr = np.asarray(arr, dtype=np.float64)
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = {"format_version": FORMAT_VERSION, "kind": kind, "config": config, "tensors": entries}
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs)


def _decode(data):
    if len(data) < 8 or data[:4] != MAGIC:
        raise ContainerError("not a container (bad magic)", 0)
    (n,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + n:
        raise ContainerError(f"manifest truncated: need {n} bytes, have {len(data) - 8}", len(data))
    try:
        manifest = json.loads(data[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"manifest is not valid JSON: {exc}", 8) from None
    if not isinstance(manifest, dict):
        raise ContainerError("manifest must be an object", 8)
    unknown = set(manifest) - MANIFEST_KEYS
    if unknown:
        raise ContainerError(f"unknown manifest fields {sorted(unknown)}", 8)
    missing = MANIFEST_KEYS - set(manifest)
    if missing:
        raise ContainerError(f"missing manifest fields {sorted(missing)}", 8)
    if manifest["format_version"] != FORMAT_VERSION:
        raise ContainerError(
            f"format version {manifest['format_version']!r} unsupported (expected {FORMAT_VERSION})", 8)
    if manifest["kind"] not in KINDS:
        raise ContainerError(f"unknown kind {manifest['kind']!r}", 8)

    base = 8 + n
    payload_len = len(data) - base
    tensors = {}
    expected_offset = 0
    for entry in manifest["tensors"]:
        if not isinstance(entry, dict) or set(entry) != ENTRY_KEYS:
            raise ContainerError(f"tensor entry must have exactly {sorted(ENTRY_KEYS)}", 8)
        name, shape, off, length = entry["name"], entry["shape"], entry["offset"], entry["length"]
        if any((not isinstance(s, int)) or s < 0 for s in shape):
            raise ContainerError(f"tensor {name!r} has invalid shape {shape}", base + off)
        if int(np.prod(shape, dtype=np.int64)) * 4 != length:
            raise ContainerError(
                f"tensor {name!r}: shape {shape} needs {int(np.prod(shape)) * 4} bytes, manifest says {length}",
                base + off)
        if off != expected_offset:
            raise ContainerError(f"tensor {name!r} offset {off}, expected {expected_offset}", base + off)
        if off + length > payload_len:
            raise ContainerError(
                f"payload truncated in tensor {name!r}: need {off + length} bytes, have {payload_len}",
                base + payload_len)
        if name in tensors:
            raise ContainerError(f"duplicate tensor name {name!r}", base + off)
        raw = np.frombuffer(data, dtype="<f4", count=length // 4, offset=base + off)
        tensors[name] = freeze(raw.astype(np.float64).reshape(shape))
        expected_offset = off + length
    if expected_offset != payload_len:
        raise ContainerError(f"{payload_len - expected_offset} trailing payload bytes", base + expected_offset)
    return manifest, tensors


def dumps(obj, config=None):
    """Serialize a ``ResidualNet``, LSTM weights (with ``config``) or a dict of arrays."""
    if isinstance(obj, resblocks.ResidualNet):
        named = [(f"block{b}.conv{j}", w) for b, blk in enumerate(obj.weights) for j, w in enumerate(blk)]
        return _encode("residual_net", obj.config.to_dict(), named)
    if isinstance(obj, dict):
        return _encode("tensors", config or {}, sorted(obj.items()))
    if isinstance(config, lstmcell.LstmConfig):
        lstmcell.check_weights(config, obj)
        named = [(f"layer{i}.{p}", getattr(lw, p)) for i, lw in enumerate(obj) for p in _LSTM_PARTS]
        return _encode("lstm_weights", config.to_dict(), named)
    raise TypeError(f"cannot serialize {type(obj).__name__}; LSTM weights need their LstmConfig")


def loads(data):
    """Inverse of ``dumps``.

    Returns a ``ResidualNet``, a ``(LstmConfig, weights)`` pair, or a
    ``(config_dict, tensors)`` pair depending on the container kind.
    """
    manifest, tensors = _decode(bytes(data))
    kind, cfg = manifest["kind"], manifest["config"]
    try:
        if kind == "residual_net":
            config = resblocks.ResidualNetConfig.from_dict(cfg)
            names = [f"block{b}.conv{j}" for b in range(config.num_blocks)
                     for j in range(config.convs_per_block)]
            if sorted(names) != sorted(tensors):
                raise ContainerError("tensor names do not match the residual net config")
            blocks = [[tensors[f"block{b}.conv{j}"] for j in range(config.convs_per_block)]
                      for b in range(config.num_blocks)]
            return resblocks.assemble(config, blocks)
        if kind == "lstm_weights":
            config = lstmcell.LstmConfig.from_dict(cfg)
            weights = tuple(
                lstmcell.LayerWeights(*(tensors[f"layer{i}.{p}"] for p in _LSTM_PARTS))
                for i in range(config.num_layers))
            lstmcell.check_weights(config, weights)
            return config, weights
    except KeyError as exc:
        raise ContainerError(f"missing tensor {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ContainerError):
            raise
        raise ContainerError(f"config does not describe these tensors: {exc}") from None
    return cfg, tensors


def save(obj, path, config=None):
    with open(path, "wb") as fh:
        fh.write(dumps(obj, config))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
