"""Turnkey train-and-evaluate harnesses for rate-accuracy sweeps."""

from __future__ import annotations

import json

from .codec import preset_config
from .container import compute_bps, payload_bits
from .dataio import BrainSignal, DatasetManifest
from .pipeline import CodecStack, decode_stream, encode_records
from .retrieval import EmbeddingDatabase
from .trainer import TrainConfig, train_layer

__all__ = ["label_rate_accuracy_point"]


def label_rate_accuracy_point(lam: float, signals: list[BrainSignal],
                              manifest: DatasetManifest,
                              label_db: EmbeddingDatabase,
                              arch: str = "desk", epochs: int = 30,
                              batch_size: int = 16, lr: float = 1e-4,
                              seed: int = 0) -> tuple[float, float]:
    """Train a label codec at one lambda; return test-set (bps, top-1)."""
    in_ch, in_len = signals[0].data.shape
    if arch in ("desk", "paper"):
        codec_config = preset_config(arch, 1, in_ch, in_len,
                                     feature_dim=label_db.dim, seed=seed)
    else:
        with open(arch, encoding="utf-8") as fh:
            codec_config = json.load(fh)
    config = TrainConfig(layer_id=1, lam=lam, epochs=epochs,
                         batch_size=batch_size, lr=lr, seed=seed,
                         target_source="label_db", codec_config=codec_config)
    ckpt = train_layer(config, signals, manifest, label_db)
    stack = CodecStack({1: ckpt})

    test_idx = manifest.indices("test")
    if not test_idx:
        raise ValueError("manifest has no test records")
    test_signals = [signals[i] for i in test_idx]
    streams = encode_records(stack, test_signals, max_layer=1)
    total_bits = 0
    hits = 0
    for stream, idx in zip(streams, test_idx):
        total_bits += payload_bits(stream)[1]
        rec = decode_stream(stack, stream, max_layer=1, label_db=label_db)
        hits += int(rec.prediction.class_id == signals[idx].class_id)
    samples = in_ch * in_len * len(test_idx)
    return compute_bps(total_bits, samples), hits / len(test_idx)
