"""Scalable layered bitstream container.

Layout (little-endian):

    magic "EIDC" | version u8=1 | flags u8 (bit0: CRC present) |
    subject_id u8 | layer_count u8
    per layer: layer_id u8 | payload_len u32 | payload bytes
    if flagged: CRC32 u32 (IEEE, over every byte after the 4-byte magic,
    up to but excluding the CRC itself)

Layer ids are strictly increasing and form a meaningful hierarchy: the
caption layer (2) requires the label layer (1), and the thumbnail layer (3)
requires nothing extra to parse but is normally carried with 1 and 2.
Slicing to a layer prefix preserves payload bytes exactly.
"""

from __future__ import annotations

import struct
import zlib

from .errors import FormatError

__all__ = [
    "LAYER_LABEL",
    "LAYER_CAPTION",
    "LAYER_THUMBNAIL",
    "pack",
    "unpack",
    "slice_stream",
    "payload_bits",
    "compute_bps",
    "inspect_stream",
]

LAYER_LABEL = 1
LAYER_CAPTION = 2
LAYER_THUMBNAIL = 3
_VALID_LAYERS = (LAYER_LABEL, LAYER_CAPTION, LAYER_THUMBNAIL)

_MAGIC = b"EIDC"
_VERSION = 1
_HEADER = struct.Struct("<4sBBBB")
_LAYER_HEAD = struct.Struct("<BI")
_FLAG_CRC = 0x01


def _check_layer_set(layer_ids) -> None:
    ids = list(layer_ids)
    if not ids:
        raise ValueError("container needs at least one layer")
    if any(l not in _VALID_LAYERS for l in ids):
        raise ValueError(f"layer ids must be in {_VALID_LAYERS}, got {ids}")
    if sorted(set(ids)) != ids:
        raise ValueError(f"layer ids must be strictly increasing, got {ids}")
    if LAYER_CAPTION in ids and LAYER_LABEL not in ids:
        raise ValueError("caption layer requires the label layer")


def pack(payloads: dict[int, bytes], subject_id: int = 0, with_crc: bool = True) -> bytes:
    """Serialize per-layer payloads into one sliceable container."""
    layer_ids = sorted(payloads)
    _check_layer_set(layer_ids)
    if not 0 <= subject_id <= 0xFF:
        raise ValueError("subject_id must fit in a byte")
    flags = _FLAG_CRC if with_crc else 0
    body = bytearray()
    body += _HEADER.pack(_MAGIC, _VERSION, flags, subject_id, len(layer_ids))
    for lid in layer_ids:
        payload = bytes(payloads[lid])
        if len(payload) > 0xFFFFFFFF:
            raise ValueError(f"layer {lid} payload too large")
        body += _LAYER_HEAD.pack(lid, len(payload))
        body += payload
    if with_crc:
        crc = zlib.crc32(bytes(body[len(_MAGIC):]))
        body += struct.pack("<I", crc)
    return bytes(body)


def _parse(stream: bytes):
    if len(stream) < _HEADER.size:
        raise FormatError("container shorter than its header")
    magic, version, flags, subject_id, layer_count = _HEADER.unpack_from(stream, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad container magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported container version {version}")
    if flags & ~_FLAG_CRC:
        raise FormatError(f"unknown container flags {flags:#x}")
    has_crc = bool(flags & _FLAG_CRC)
    off = _HEADER.size
    layers: list[tuple[int, bytes]] = []
    for i in range(layer_count):
        if off + _LAYER_HEAD.size > len(stream):
            raise FormatError(f"container truncated in layer record {i}")
        lid, plen = _LAYER_HEAD.unpack_from(stream, off)
        off += _LAYER_HEAD.size
        if off + plen > len(stream):
            raise FormatError(f"container truncated in layer {lid} payload")
        layers.append((lid, stream[off:off + plen]))
        off += plen
    if has_crc:
        if off + 4 > len(stream):
            raise FormatError("container truncated before CRC")
        (stored,) = struct.unpack_from("<I", stream, off)
        off += 4
        actual = zlib.crc32(stream[len(_MAGIC):off - 4])
        if stored != actual:
            raise FormatError(
                f"container CRC mismatch: stored {stored:#010x}, actual {actual:#010x}"
            )
    if off != len(stream):
        raise FormatError(f"container has {len(stream) - off} trailing bytes")
    ids = [lid for lid, _ in layers]
    try:
        _check_layer_set(ids)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return subject_id, has_crc, layers


def unpack(stream: bytes) -> tuple[dict[int, bytes], int]:
    """Parse a container; returns (payloads by layer, subject_id)."""
    subject_id, _, layers = _parse(stream)
    return {lid: payload for lid, payload in layers}, subject_id


def slice_stream(stream: bytes, max_layer: int) -> bytes:
    """Re-pack only the layers <= max_layer; payload bytes are unchanged."""
    if max_layer < 1:
        raise ValueError("max_layer must be >= 1")
    subject_id, has_crc, layers = _parse(stream)
    kept = {lid: payload for lid, payload in layers if lid <= max_layer}
    if not kept:
        raise ValueError(f"slicing to layer {max_layer} would drop every layer")
    return pack(kept, subject_id=subject_id, with_crc=has_crc)


def payload_bits(stream: bytes, include_headers: bool = False) -> dict[int, int]:
    """Bits per layer.  Headers and CRC are excluded unless requested, in
    which case the fixed header is charged to the first layer and each layer
    header (plus a share of the CRC) to its own layer."""
    _, has_crc, layers = _parse(stream)
    bits: dict[int, int] = {}
    for i, (lid, payload) in enumerate(layers):
        n = len(payload) * 8
        if include_headers:
            n += _LAYER_HEAD.size * 8
            if i == 0:
                n += _HEADER.size * 8
            if has_crc and i == len(layers) - 1:
                n += 32
        bits[lid] = n
    return bits


def compute_bps(total_bits: float, samples: int) -> float:
    """Bits-per-sample: total bits divided by raw sample count."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    return total_bits / samples


def inspect_stream(stream: bytes) -> list[str]:
    """Stable key=value lines describing a container, for scripting."""
    subject_id, has_crc, layers = _parse(stream)
    lines = [
        f"magic={_MAGIC.decode()}",
        f"version={_VERSION}",
        f"crc={'present' if has_crc else 'absent'}",
        f"subject_id={subject_id}",
        f"layer_count={len(layers)}",
    ]
    for lid, payload in layers:
        lines.append(f"layer{lid}_bytes={len(payload)}")
    lines.append(f"total_bytes={len(stream)}")
    return lines
