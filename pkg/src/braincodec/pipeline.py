"""Record-level encode/decode orchestration shared by the CLI and demos."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .checkpoint import Checkpoint
from .codec import QuantizedCode, SemanticFeature, Thumbnail, layer_decode
from .container import LAYER_CAPTION, LAYER_LABEL, pack, payload_bits, unpack
from .dataio import BrainSignal
from .entropy import quantize
from .errors import FormatError
from .rangecoder import range_decode, range_encode
from .retrieval import ClassPrediction, EmbeddingDatabase, classify

__all__ = ["CodecStack", "DecodedRecord", "encode_record", "encode_records",
           "decode_stream"]


@dataclass
class CodecStack:
    """Checkpoints for the layers in use, keyed by layer id."""

    checkpoints: dict[int, Checkpoint] = field(default_factory=dict)

    def __post_init__(self):
        for lid, ck in self.checkpoints.items():
            if ck.layer_id != lid:
                raise ValueError(f"checkpoint under key {lid} is for layer {ck.layer_id}")
            if ck.pmf_table is None:
                raise ValueError(f"layer {lid} checkpoint lacks a PMF table")

    def require(self, layer_id: int) -> Checkpoint:
        if layer_id not in self.checkpoints:
            raise ValueError(f"no checkpoint loaded for layer {layer_id}")
        return self.checkpoints[layer_id]

    def layers_up_to(self, max_layer: int) -> list[int]:
        return [l for l in sorted(self.checkpoints) if l <= max_layer]


def _encode_layer(ck: Checkpoint, signal: BrainSignal) -> bytes:
    from .codec import layer_encode

    y = layer_encode(ck.codec, signal)
    symbols = ck.pmf_table.clamp(quantize(y))
    return range_encode(symbols, ck.pmf_table)


def encode_record(stack: CodecStack, signal: BrainSignal, max_layer: int = 3,
                  with_crc: bool = True) -> bytes:
    """Encode one recording into a layered container up to `max_layer`."""
    if max_layer < 1:
        raise ValueError("max_layer must be >= 1")
    layers = stack.layers_up_to(max_layer)
    if LAYER_LABEL not in layers:
        raise ValueError("encoding requires at least the label layer")
    payloads = {lid: _encode_layer(stack.require(lid), signal) for lid in layers}
    return pack(payloads, subject_id=signal.subject_id, with_crc=with_crc)


def encode_records(stack: CodecStack, signals: list[BrainSignal], max_layer: int = 3,
                   with_crc: bool = True, jobs: int = 1) -> list[bytes]:
    """Encode many records; output order always matches input order."""
    if jobs <= 1:
        return [encode_record(stack, s, max_layer, with_crc) for s in signals]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(
            lambda s: encode_record(stack, s, max_layer, with_crc), signals
        ))


@dataclass
class DecodedRecord:
    subject_id: int
    label_feature: SemanticFeature | None = None
    caption_feature: SemanticFeature | None = None
    thumbnail: Thumbnail | None = None
    prediction: ClassPrediction | None = None
    layer_bits: dict[int, int] = field(default_factory=dict)


def decode_stream(stack: CodecStack, stream: bytes, max_layer: int = 3,
                  label_db: EmbeddingDatabase | None = None,
                  top_k: int = 1) -> DecodedRecord:
    """Decode a container prefix; classification runs when a database is given."""
    payloads, subject_id = unpack(stream)
    bits = payload_bits(stream)
    out = DecodedRecord(subject_id=subject_id,
                        layer_bits={l: b for l, b in bits.items() if l <= max_layer})
    wanted = [l for l in sorted(payloads) if l <= max_layer]
    if LAYER_LABEL not in wanted:
        raise FormatError("stream has no label layer at or below the requested layer")
    for lid in wanted:
        ck = stack.require(lid)
        symbols = range_decode(payloads[lid], ck.pmf_table, ck.codec.latent_dim)
        code = QuantizedCode(symbols, lid)
        if lid == LAYER_LABEL:
            out.label_feature = layer_decode(ck.codec, code)
            if label_db is not None:
                out.prediction = classify(label_db, out.label_feature.vector,
                                          k=min(top_k, len(label_db)))
        elif lid == LAYER_CAPTION:
            out.caption_feature = layer_decode(ck.codec, code,
                                               condition=out.label_feature)
        else:
            out.thumbnail = layer_decode(ck.codec, code)
    return out
