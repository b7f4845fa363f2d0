"""Checkpoint files: trained codec parameters plus coding tables.

Layout (little-endian):

    magic "EIDW" | version u8=1 | param_count u32
    per parameter: name_len u16 | UTF-8 name | rank u8 | dims u32 each |
    float32 values, row-major
    pmf_flag u8; if 1: channel_count u32, then per channel:
    offset i16 | length u16 | length x u16 probabilities

Parameter values are stored as float32.  A checkpoint's in-memory
parameters are already rounded to float32, so save/load round-trips are
bit-exact and reloaded codecs reproduce identical eval-mode outputs.
Structural metadata (codec config, epoch, validation loss, config hash)
travels as a JSON blob under the reserved parameter name "meta/json",
encoded one byte per float32 value.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .codec import LayerCodec, build_codec_from_config
from .entropy import PmfTable
from .errors import FormatError

__all__ = [
    "Checkpoint",
    "save_param_table",
    "load_param_table",
    "save_checkpoint",
    "load_checkpoint",
    "round_params_f32",
]

_MAGIC = b"EIDW"
_VERSION = 1
_META_KEY = "meta/json"


@dataclass
class Checkpoint:
    codec: LayerCodec
    pmf_table: PmfTable | None
    epoch: int
    val_loss: float
    config_hash: str

    @property
    def layer_id(self) -> int:
        return self.codec.layer_id


def round_params_f32(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Round float64 parameters to their float32-representable values."""
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def save_param_table(fh, params: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw_name)))
        fh.write(raw_name)
        fh.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(arr.tobytes())


def load_param_table(blob: bytes, off: int) -> tuple[dict[str, np.ndarray], int]:
    if off + 4 > len(blob):
        raise FormatError("checkpoint truncated before parameter count")
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        if off + 2 > len(blob):
            raise FormatError("checkpoint truncated in parameter name length")
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        if off + 1 > len(blob):
            raise FormatError(f"checkpoint truncated in {name} rank")
        rank = blob[off]
        off += 1
        dims = []
        for _ in range(rank):
            (d,) = struct.unpack_from("<I", blob, off)
            dims.append(d)
            off += 4
        n_values = int(np.prod(dims)) if dims else 1
        end = off + 4 * n_values
        if end > len(blob):
            raise FormatError(f"checkpoint truncated in {name} values")
        values = np.frombuffer(blob, dtype="<f4", count=n_values, offset=off)
        params[name] = values.reshape(dims).astype(np.float64)
        off = end
    return params, off


def _save_pmf(fh, table: PmfTable | None) -> None:
    if table is None:
        fh.write(b"\x00")
        return
    fh.write(b"\x01")
    fh.write(struct.pack("<I", table.n_channels))
    for offset, probs in zip(table.offsets, table.probs):
        if not -(1 << 15) <= offset < (1 << 15):
            raise ValueError(f"pmf offset {offset} does not fit in i16")
        fh.write(struct.pack("<hH", int(offset), len(probs)))
        fh.write(np.ascontiguousarray(probs, dtype="<u2").tobytes())


def _load_pmf(blob: bytes, off: int) -> tuple[PmfTable | None, int]:
    if off + 1 > len(blob):
        raise FormatError("checkpoint truncated before PMF flag")
    flag = blob[off]
    off += 1
    if flag == 0:
        return None, off
    if flag != 1:
        raise FormatError(f"bad PMF flag {flag}")
    (channels,) = struct.unpack_from("<I", blob, off)
    off += 4
    offsets, probs = [], []
    for c in range(channels):
        if off + 4 > len(blob):
            raise FormatError(f"checkpoint truncated in PMF channel {c}")
        offset, length = struct.unpack_from("<hH", blob, off)
        off += 4
        end = off + 2 * length
        if end > len(blob):
            raise FormatError(f"checkpoint truncated in PMF channel {c} values")
        q = np.frombuffer(blob, dtype="<u2", count=length, offset=off).astype(np.int64)
        off = end
        offsets.append(offset)
        probs.append(q)
    table = PmfTable.from_probs(np.array(offsets), probs)
    return table, off


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    meta = {
        "config": ckpt.codec.config,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "config_hash": ckpt.config_hash,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    params = dict(ckpt.codec.all_params())
    params[_META_KEY] = np.frombuffer(meta_bytes, dtype=np.uint8).astype(np.float64)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        save_param_table(fh, params)
        _save_pmf(fh, ckpt.pmf_table)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != _MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}")
    if len(blob) < 5 or blob[4] != _VERSION:
        raise FormatError("unsupported checkpoint version")
    params, off = load_param_table(blob, 5)
    table, off = _load_pmf(blob, off)
    if off != len(blob):
        raise FormatError(f"checkpoint has {len(blob) - off} trailing bytes")
    if _META_KEY not in params:
        raise FormatError("checkpoint is missing its metadata record")
    meta_bytes = bytes(params.pop(_META_KEY).astype(np.uint8))
    meta = json.loads(meta_bytes.decode("utf-8"))
    codec = build_codec_from_config(meta["config"])
    codec.load_params(params)
    return Checkpoint(
        codec=codec,
        pmf_table=table,
        epoch=int(meta["epoch"]),
        val_loss=float(meta["val_loss"]),
        config_hash=str(meta["config_hash"]),
    )
