"""All three layers at acquisition scale: 128 channels x 440 samples.

Synthesizes a 40-class dataset at 1 kHz, bandpass-filters and windows it,
trains the label, caption, and thumbnail codecs, then encodes layered
bitstreams, classifies from the label layer, and accounts bits per layer.

By default this runs a quick profile (6 label-layer epochs, ~3 min) whose
rate sits above the converged operating point.  Set FULL=1 for the
converged 24-epoch run (~10 min), which brings the label layer down to the
0.01-0.03 bits-per-sample band (the exporter package's e2e test pins the
exact verified configuration).  Embedding databases here are random
placeholders; the exporter builds real ones from label/caption texts.
"""

import os

import numpy as np

from braincodec import (ChannelModel, CodecStack, EmbeddingDatabase,
                        SyntheticSpec, TrainConfig, compute_bps, decode_stream,
                        encode_records, payload_bits, preprocess, simulate,
                        slice_stream, split_dataset, synthesize_dataset,
                        top1_accuracy, train_layer)
from braincodec.dataio import synthesize_thumbnails

label_epochs = 24 if os.environ.get("FULL") == "1" else 6

print("=== dataset at acquisition scale ===")
spec = SyntheticSpec(n_classes=40, records_per_class=6, channels=128,
                     samples=500, sample_rate_hz=1000, noise_sigma=1.0, seed=1)
raw, manifest = synthesize_dataset(spec)
signals = [preprocess(s) for s in raw]
manifest = split_dataset(signals, manifest, (0.6, 0.2, 0.2), seed=1)
print(f"{len(signals)} records preprocessed to {signals[0].data.shape}")

rng = np.random.default_rng(5)
label_emb = rng.standard_normal((40, 768))
label_emb /= np.linalg.norm(label_emb, axis=1, keepdims=True)
label_db = EmbeddingDatabase(np.arange(40), [f"label {i}" for i in range(40)],
                             label_emb)
caption_emb = label_emb[[s.class_id for s in signals]][:, :512].copy()
caption_emb += 0.1 * rng.standard_normal(caption_emb.shape)
caption_db = EmbeddingDatabase(np.arange(len(signals)),
                               [f"caption {i}" for i in range(len(signals))],
                               caption_emb)
thumbs = synthesize_thumbnails(spec)

print(f"\n=== training (label layer: {label_epochs} epochs) ===")
label_cfg = dict(kind="label", in_ch=128, in_len=440,
                 conv_channels=[64, 128, 256], hidden=512, latent_dim=512,
                 feature_dim=768, dropout=0.25, seed=0)
label_ckpt = train_layer(
    TrainConfig(layer_id=1, lam=1e4, epochs=label_epochs, batch_size=16,
                lr=2e-3, seed=0, target_source="label_db",
                codec_config=label_cfg),
    signals, manifest, label_db)
print(f"label layer: best epoch {label_ckpt.epoch}")

caption_cfg = dict(kind="caption", in_ch=128, in_len=440,
                   conv_channels=[64, 128, 256], hidden=512, latent_dim=512,
                   feature_dim=512, condition_dim=768, context_dim=512,
                   dropout=0.25, seed=10)
caption_ckpt = train_layer(
    TrainConfig(layer_id=2, lam=40.0, epochs=3, batch_size=16, lr=1e-3,
                seed=10, target_source="caption_db", codec_config=caption_cfg),
    signals, manifest, caption_db, condition_checkpoint=label_ckpt)
print("caption layer: trained (conditioned on decoded label features)")

thumb_cfg = dict(kind="thumbnail", in_ch=128, in_len=440, widths=[256, 256],
                 latent_dim=2048, dec_widths=[256, 512], dropout=0.25, seed=20)
thumb_ckpt = train_layer(
    TrainConfig(layer_id=3, lam=4e4, epochs=3, batch_size=16, lr=1e-3,
                seed=20, target_source="thumbnails", codec_config=thumb_cfg),
    signals, manifest, thumbs)
print("thumbnail layer: trained")

print("\n=== encode, slice, classify ===")
stack = CodecStack({1: label_ckpt, 2: caption_ckpt, 3: thumb_ckpt})
test_idx = manifest.indices("test")
streams = encode_records(stack, [signals[i] for i in test_idx], max_layer=3)
bits = {1: 0, 2: 0, 3: 0}
preds, truths, agree = [], [], 0
for stream, idx in zip(streams, test_idx):
    for lid, b in payload_bits(stream).items():
        bits[lid] += b
    full = decode_stream(stack, stream, max_layer=3, label_db=label_db)
    sliced = decode_stream(stack, slice_stream(stream, 1), max_layer=1,
                           label_db=label_db)
    agree += int(full.prediction.class_id == sliced.prediction.class_id)
    preds.append(full.prediction.class_id)
    truths.append(signals[idx].class_id)

n_samples = 128 * 440 * len(test_idx)
print(f"top-1 accuracy: {top1_accuracy(preds, truths):.3f}")
print(f"slice agreement: {agree}/{len(streams)}")
for lid in (1, 2, 3):
    print(f"  layer {lid}: {bits[lid] / len(test_idx):7.0f} bits/record "
          f"-> {compute_bps(bits[lid], n_samples):.4f} bps")
print(f"  total  : {compute_bps(sum(bits.values()), n_samples):.4f} bps")

print("\n=== constrained delivery ===")
budget = int(1.5 * bits[1] / len(test_idx))
delivered, report = simulate(streams[0], ChannelModel(budget))
print(f"budget {budget} bits -> layers {report.delivered_layers} delivered "
      f"({report.delivered_bits} bits), dropped {report.dropped_layers}")
