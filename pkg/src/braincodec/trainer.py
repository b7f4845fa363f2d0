"""Rate-distortion training loop with validation-based model selection.

Each step runs the encoder, replaces rounding with additive uniform noise,
estimates the rate through the factorized density, decodes, and minimizes
``rate_bits + lambda * distortion`` with Adam.  Validation always uses hard
rounding and no noise or dropout.  The returned checkpoint carries the
best-on-validation parameters (rounded to float32 so saved copies reproduce
identical outputs) plus the PMF tables used for actual coding.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .checkpoint import Checkpoint, round_params_f32
from .codec import (LayerCodec, build_caption_codec, build_codec_from_config,
                    build_label_codec, build_thumbnail_codec, distortion_var)
from .container import LAYER_CAPTION, LAYER_LABEL, LAYER_THUMBNAIL
from .dataio import BrainSignal, DatasetManifest
from .entropy import build_pmf_table, quantize, rate_bits_var
from .nn import adam_init, adam_step
from .retrieval import EmbeddingDatabase

logger = logging.getLogger(__name__)

__all__ = ["TrainConfig", "train_layer", "validate", "resolve_targets",
           "condition_features"]


@dataclass
class TrainConfig:
    layer_id: int
    lam: float
    alpha: float = 4.0
    epochs: int = 150
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    seed: int = 0
    grad_clip: float = 10.0
    target_source: str = "label_db"
    codec_config: dict | None = None

    def __post_init__(self):
        if self.layer_id not in (LAYER_LABEL, LAYER_CAPTION, LAYER_THUMBNAIL):
            raise ValueError(f"bad layer_id {self.layer_id}")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.target_source not in ("label_db", "caption_db", "thumbnails"):
            raise ValueError(f"bad target_source {self.target_source!r}")

    def digest(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


def _default_codec(config: TrainConfig) -> LayerCodec:
    if config.codec_config is not None:
        return build_codec_from_config(config.codec_config)
    if config.layer_id == LAYER_LABEL:
        return build_label_codec(seed=config.seed)
    if config.layer_id == LAYER_CAPTION:
        return build_caption_codec(seed=config.seed + 10)
    return build_thumbnail_codec(seed=config.seed + 20)


def resolve_targets(config: TrainConfig, signals: list[BrainSignal], targets) -> np.ndarray:
    """Aligned per-record (N, D) target matrix for the configured source."""
    n = len(signals)
    if config.target_source == "label_db":
        if not isinstance(targets, EmbeddingDatabase):
            raise ValueError("label_db targets must be an EmbeddingDatabase")
        by_id = {int(c): targets.embeddings[i] for i, c in enumerate(targets.class_ids)}
        missing = {s.class_id for s in signals} - set(by_id)
        if missing:
            raise ValueError(f"label database missing class ids {sorted(missing)}")
        return np.stack([by_id[s.class_id] for s in signals])
    if config.target_source == "caption_db":
        if not isinstance(targets, EmbeddingDatabase):
            raise ValueError("caption_db targets must be an EmbeddingDatabase")
        by_idx = {int(c): targets.embeddings[i] for i, c in enumerate(targets.class_ids)}
        missing = set(range(n)) - set(by_idx)
        if missing:
            raise ValueError(f"caption database missing record indices "
                             f"{sorted(missing)[:5]}...")
        return np.stack([by_idx[i] for i in range(n)])
    thumbs = np.asarray(targets, dtype=np.float64)
    if thumbs.shape[0] != n or thumbs.ndim != 4:
        raise ValueError(f"need one thumbnail per record, got {thumbs.shape}")
    return thumbs.reshape(n, -1)


def condition_features(ckpt: Checkpoint, signals: list[BrainSignal],
                       batch_size: int = 64) -> np.ndarray:
    """Hard-quantized decoded label features, exactly as a receiver sees them."""
    if ckpt.layer_id != LAYER_LABEL:
        raise ValueError("conditioning checkpoint must be the label layer")
    codec = ckpt.codec
    feats = []
    for lo in range(0, len(signals), batch_size):
        chunk = np.stack([s.data for s in signals[lo:lo + batch_size]])
        y = codec.encoder.apply(Var(chunk), codec.encoder.param_vars(), mode="eval").value
        sym = quantize(y).astype(np.float64)
        if ckpt.pmf_table is not None:
            sym = np.stack([ckpt.pmf_table.clamp(row) for row in sym.astype(np.int64)])
            sym = sym.astype(np.float64)
        z = codec.decoder.apply(Var(sym), codec.decoder.param_vars(), mode="eval").value
        feats.append(z)
    return np.concatenate(feats, axis=0)


def _split_vars(all_vars: dict[str, Var]):
    enc = {k[4:]: v for k, v in all_vars.items() if k.startswith("enc.")}
    dec = {k[4:]: v for k, v in all_vars.items() if k.startswith("dec.")}
    dens = {k: v for k, v in all_vars.items() if k.startswith("dens.")}
    return enc, dec, dens


def _clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
        logger.info("gradient clip active: norm %.3f -> %.1f", total, max_norm)
    return total


def _eval_metrics(codec: LayerCodec, signals: list[BrainSignal], targets: np.ndarray,
                  indices, config: TrainConfig,
                  conditions: np.ndarray | None) -> tuple[float, float, float]:
    """Eval-mode (hard-rounded, noiseless) mean rate, distortion, loss."""
    from .codec import distortion as dist_fn

    idx = list(indices)
    if not idx:
        raise ValueError("empty evaluation set")
    rates, dists = [], []
    bs = max(config.batch_size, 32)
    for lo in range(0, len(idx), bs):
        chunk = idx[lo:lo + bs]
        x = np.stack([signals[i].data for i in chunk])
        y = codec.encoder.apply(Var(x), codec.encoder.param_vars(), mode="eval").value
        sym = quantize(y).astype(np.float64)
        pv = codec.density.param_vars()
        rate_rows = rate_bits_var(codec.density, Var(sym), pv).value
        ctx = Var(conditions[chunk]) if conditions is not None else None
        z_hat = codec.decoder.apply(
            Var(sym), codec.decoder.param_vars(), mode="eval", context=ctx
        ).value
        rates.extend(rate_rows.tolist())
        for row, i in enumerate(chunk):
            dists.append(dist_fn(config.layer_id, targets[i], z_hat[row], config.alpha))
    mean_rate = float(np.mean(rates))
    mean_dist = float(np.mean(dists))
    return mean_rate, mean_dist, mean_rate + config.lam * mean_dist


def train_layer(config: TrainConfig, signals: list[BrainSignal],
                manifest: DatasetManifest, targets,
                condition_checkpoint: Checkpoint | None = None,
                log_path=None) -> Checkpoint:
    """Train one layer codec; returns the best-on-validation checkpoint."""
    if config.layer_id == LAYER_CAPTION and condition_checkpoint is None:
        raise ValueError("caption-layer training requires a label-layer checkpoint")
    target_mat = resolve_targets(config, signals, targets)
    if not manifest.split:
        raise ValueError("manifest has no train/val/test split")
    train_idx = manifest.indices("train")
    val_idx = manifest.indices("val")
    if not train_idx or not val_idx:
        raise ValueError("split must provide non-empty train and val sets")

    codec = _default_codec(config)
    expect = codec.input_shape
    if signals[0].data.shape != expect:
        raise ValueError(f"codec expects {expect} signals, got {signals[0].data.shape}")
    if config.layer_id == LAYER_THUMBNAIL:
        from .codec import THUMB_SHAPE
        out_dim = int(np.prod(THUMB_SHAPE))
    else:
        out_dim = codec.config["feature_dim"]
    if target_mat.shape[1] != out_dim:
        raise ValueError(
            f"targets are {target_mat.shape[1]}-dim but codec decodes {out_dim}"
        )

    conditions = None
    if config.layer_id == LAYER_CAPTION:
        conditions = condition_features(condition_checkpoint, signals)
        if conditions.shape[1] != codec.config["condition_dim"]:
            raise ValueError(
                f"conditioning features are {conditions.shape[1]}-dim but the codec "
                f"expects {codec.config['condition_dim']}"
            )

    params = codec.all_params()
    opt = adam_init(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None

    best = None  # (loss, epoch, rounded params)
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_idx))
            epoch_rate, epoch_dist, n_batches = 0.0, 0.0, 0
            for lo in range(0, len(order), config.batch_size):
                batch = [train_idx[i] for i in order[lo:lo + config.batch_size]]
                x = np.stack([signals[i].data for i in batch])
                t = target_mat[batch]

                all_vars = {name: Var(arr) for name, arr in params.items()}
                enc_v, dec_v, dens_v = _split_vars(all_vars)
                y = codec.encoder.apply(Var(x), enc_v, mode="train", rng=rng)
                noisy = y + ad.constant(
                    rng.uniform(-0.5, 0.5, size=y.value.shape)
                )
                rate_rows = rate_bits_var(codec.density, noisy, dens_v)
                ctx = Var(conditions[batch]) if conditions is not None else None
                z_hat = codec.decoder.apply(noisy, dec_v, mode="train", rng=rng,
                                            context=ctx)
                dist = distortion_var(config.layer_id, t, z_hat, config.alpha)
                loss = ad.vmean(rate_rows) + ad.mul(ad.constant(config.lam), dist)
                loss.backward()

                grads = {name: var.grad for name, var in all_vars.items()}
                _clip_global_norm(grads, config.grad_clip)
                adam_step(params, grads, opt)

                epoch_rate += float(ad.vmean(rate_rows).value)
                epoch_dist += float(dist.value)
                n_batches += 1

            val_rate, val_dist, val_loss = _eval_metrics(
                codec, signals, target_mat, val_idx, config, conditions
            )
            line = (f"epoch={epoch} rate={epoch_rate / n_batches:.4f} "
                    f"distortion={epoch_dist / n_batches:.6f} loss={val_loss:.4f}")
            logger.debug("%s", line)
            if log_fh:
                log_fh.write(line + "\n")
                log_fh.flush()
            if best is None or val_loss < best[0]:
                best = (val_loss, epoch, round_params_f32(params))
    finally:
        if log_fh:
            log_fh.close()

    val_loss, best_epoch, best_params = best
    _assign_params(codec, best_params)

    # Entropy-table supports: medians of the selected model's hard-quantized
    # training latents (one final pass with the frozen weights).
    latents = []
    bs = max(config.batch_size, 32)
    for lo in range(0, len(train_idx), bs):
        chunk = train_idx[lo:lo + bs]
        x = np.stack([signals[i].data for i in chunk])
        y = codec.encoder.apply(Var(x), codec.encoder.param_vars(), mode="eval").value
        latents.append(quantize(y))
    medians = np.round(np.median(np.concatenate(latents), axis=0)).astype(np.int64)
    table = build_pmf_table(codec.density, medians)

    return Checkpoint(codec=codec, pmf_table=table, epoch=best_epoch,
                      val_loss=val_loss, config_hash=config.digest())


def _assign_params(codec: LayerCodec, named: dict[str, np.ndarray]) -> None:
    for k in codec.encoder.params:
        codec.encoder.params[k] = named[f"enc.{k}"].copy()
    for k in codec.decoder.params:
        codec.decoder.params[k] = named[f"dec.{k}"].copy()
    for k in codec.density.params:
        codec.density.params[k] = named[k].copy()


def validate(ckpt: Checkpoint, signals: list[BrainSignal], targets,
             config: TrainConfig,
             condition_checkpoint: Checkpoint | None = None) -> tuple[float, float, float]:
    """Eval-mode metrics of a checkpoint on a signal set: (rate, distortion, loss)."""
    if not signals:
        raise ValueError("empty validation set")
    if ckpt.layer_id != config.layer_id:
        raise ValueError("checkpoint layer does not match config")
    target_mat = resolve_targets(config, signals, targets)
    conditions = None
    if config.layer_id == LAYER_CAPTION:
        if condition_checkpoint is None:
            raise ValueError("caption-layer validation requires a label checkpoint")
        conditions = condition_features(condition_checkpoint, signals)
    return _eval_metrics(ckpt.codec, signals, target_mat, range(len(signals)),
                         config, conditions)
