"""The three layer codecs and their distortions.

Layer 1 maps a recording to a label-level embedding, layer 2 to a
caption-level embedding decoded with the label feature as modulation
context, and layer 3 to a small thumbnail image.  Each codec couples an
encoder network, a decoder network, and a factorized density over its
integer latent channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .container import LAYER_CAPTION, LAYER_LABEL, LAYER_THUMBNAIL
from .dataio import BrainSignal
from .entropy import FactorizedDensity
from .nn import (Activation, ConvResBlock, Dropout, Film, Flatten, GlobalAvgPool,
                 Linear, Network, ResBlock1d)

__all__ = [
    "LABEL_FEATURE_DIM",
    "CAPTION_FEATURE_DIM",
    "THUMB_SHAPE",
    "QuantizedCode",
    "SemanticFeature",
    "Thumbnail",
    "LayerCodec",
    "build_label_codec",
    "build_caption_codec",
    "build_thumbnail_codec",
    "build_codec_from_config",
    "layer_encode",
    "layer_decode",
    "distortion",
    "distortion_var",
    "rd_loss",
]

LABEL_FEATURE_DIM = 768
CAPTION_FEATURE_DIM = 512
THUMB_SHAPE = (32, 32, 3)


@dataclass
class QuantizedCode:
    symbols: np.ndarray
    layer_id: int

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.layer_id not in (LAYER_LABEL, LAYER_CAPTION, LAYER_THUMBNAIL):
            raise ValueError(f"bad layer_id {self.layer_id}")


@dataclass
class SemanticFeature:
    vector: np.ndarray
    level: str  # "label" or "caption"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if self.level not in ("label", "caption"):
            raise ValueError(f"bad feature level {self.level!r}")
        if not np.isfinite(self.vector).all():
            raise ValueError("non-finite semantic feature")


@dataclass
class Thumbnail:
    pixels: np.ndarray  # (H, W, 3) in [0, 1]

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != THUMB_SHAPE:
            raise ValueError(f"thumbnail must be {THUMB_SHAPE}, got {self.pixels.shape}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("thumbnail values must lie in [0, 1]")


@dataclass
class LayerCodec:
    layer_id: int
    encoder: Network
    decoder: Network
    density: FactorizedDensity
    latent_dim: int
    config: dict = field(default_factory=dict)

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.config["in_ch"], self.config["in_len"])

    def all_params(self) -> dict[str, np.ndarray]:
        """Named view over encoder, decoder, and density parameters."""
        out = {}
        out.update({f"enc.{k}": v for k, v in self.encoder.params.items()})
        out.update({f"dec.{k}": v for k, v in self.decoder.params.items()})
        out.update(self.density.params)
        return out

    def load_params(self, named: dict[str, np.ndarray]) -> None:
        for k in self.encoder.params:
            self.encoder.params[k] = np.array(named[f"enc.{k}"], dtype=np.float64)
        for k in self.decoder.params:
            self.decoder.params[k] = np.array(named[f"dec.{k}"], dtype=np.float64)
        for k in self.density.params:
            self.density.params[k] = np.array(named[k], dtype=np.float64)


def build_label_codec(in_ch: int = 128, in_len: int = 440,
                      conv_channels: tuple[int, ...] = (256, 512, 768, 768),
                      hidden: int = 1000, latent_dim: int = 512,
                      feature_dim: int = LABEL_FEATURE_DIM,
                      dropout: float = 0.25, seed: int = 0) -> LayerCodec:
    """Label-level codec: temporal conv encoder, dense residual decoder."""
    config = dict(kind="label", in_ch=in_ch, in_len=in_len,
                  conv_channels=list(conv_channels), hidden=hidden,
                  latent_dim=latent_dim, feature_dim=feature_dim,
                  dropout=dropout, seed=seed)
    enc_layers: list = []
    ch = in_ch
    for out_ch in conv_channels:
        enc_layers.append(ConvResBlock(ch, out_ch, kernel=3, stride=2))
        ch = out_ch
    enc_layers += [
        GlobalAvgPool(),
        Dropout(dropout),
        ResBlock1d(ch, hidden),
        Dropout(dropout),
        ResBlock1d(hidden, latent_dim),
    ]
    dec_layers = [
        ResBlock1d(latent_dim, hidden),
        ResBlock1d(hidden, feature_dim),
        ResBlock1d(feature_dim, feature_dim),
    ]
    return LayerCodec(
        layer_id=LAYER_LABEL,
        encoder=Network(enc_layers, seed=seed),
        decoder=Network(dec_layers, seed=seed + 1),
        density=FactorizedDensity(latent_dim, seed=seed + 2),
        latent_dim=latent_dim,
        config=config,
    )


def build_caption_codec(in_ch: int = 128, in_len: int = 440,
                        conv_channels: tuple[int, ...] = (256, 512, 768, 768),
                        hidden: int = 1000, latent_dim: int = 512,
                        feature_dim: int = CAPTION_FEATURE_DIM,
                        condition_dim: int = LABEL_FEATURE_DIM,
                        context_dim: int = 512,
                        dropout: float = 0.25, seed: int = 10) -> LayerCodec:
    """Caption-level codec whose decoder is modulated by the label feature."""
    config = dict(kind="caption", in_ch=in_ch, in_len=in_len,
                  conv_channels=list(conv_channels), hidden=hidden,
                  latent_dim=latent_dim, feature_dim=feature_dim,
                  condition_dim=condition_dim, context_dim=context_dim,
                  dropout=dropout, seed=seed)
    enc_layers: list = []
    ch = in_ch
    for out_ch in conv_channels:
        enc_layers.append(ConvResBlock(ch, out_ch, kernel=3, stride=2))
        ch = out_ch
    enc_layers += [
        GlobalAvgPool(),
        Dropout(dropout),
        ResBlock1d(ch, hidden),
        Dropout(dropout),
        ResBlock1d(hidden, latent_dim),
    ]
    context_layers = [
        Linear(condition_dim, context_dim),
        Activation(),
        Linear(context_dim, context_dim),
    ]
    dec_layers = [
        Film(latent_dim),
        ResBlock1d(latent_dim, hidden),
        Film(hidden),
        ResBlock1d(hidden, feature_dim),
        Film(feature_dim),
        ResBlock1d(feature_dim, feature_dim),
    ]
    return LayerCodec(
        layer_id=LAYER_CAPTION,
        encoder=Network(enc_layers, seed=seed),
        decoder=Network(dec_layers, context_layers=context_layers, seed=seed + 1),
        density=FactorizedDensity(latent_dim, seed=seed + 2),
        latent_dim=latent_dim,
        config=config,
    )


def build_thumbnail_codec(in_ch: int = 128, in_len: int = 440,
                          widths: tuple[int, int] = (4096, 3072),
                          latent_dim: int = 2048,
                          dec_widths: tuple[int, int] = (3072, 4096),
                          dropout: float = 0.25, seed: int = 20) -> LayerCodec:
    """Thumbnail codec: dense encoder/decoder ending in 32x32x3 pixels."""
    out_dim = int(np.prod(THUMB_SHAPE))
    config = dict(kind="thumbnail", in_ch=in_ch, in_len=in_len,
                  widths=list(widths), latent_dim=latent_dim,
                  dec_widths=list(dec_widths), dropout=dropout, seed=seed)
    enc_layers = [
        Flatten(),
        Linear(in_ch * in_len, widths[0]),
        Dropout(dropout),
        ResBlock1d(widths[0], widths[1]),
        Dropout(dropout),
        ResBlock1d(widths[1], latent_dim),
    ]
    dec_layers = [
        ResBlock1d(latent_dim, dec_widths[0]),
        ResBlock1d(dec_widths[0], dec_widths[1]),
        ResBlock1d(dec_widths[1], out_dim),
    ]
    return LayerCodec(
        layer_id=LAYER_THUMBNAIL,
        encoder=Network(enc_layers, seed=seed),
        decoder=Network(dec_layers, seed=seed + 1),
        density=FactorizedDensity(latent_dim, seed=seed + 2),
        latent_dim=latent_dim,
        config=config,
    )


def preset_config(preset: str, layer_id: int, in_ch: int, in_len: int,
                  feature_dim: int | None = None, condition_dim: int | None = None,
                  seed: int = 0) -> dict:
    """Builder arguments for the full-scale ('paper') or small ('desk') stacks."""
    if preset not in ("paper", "desk"):
        raise ValueError(f"unknown preset {preset!r}")
    big = preset == "paper"
    if layer_id == LAYER_LABEL:
        return dict(kind="label", in_ch=in_ch, in_len=in_len,
                    conv_channels=[256, 512, 768, 768] if big else [32, 64],
                    hidden=1000 if big else 96, latent_dim=512 if big else 32,
                    feature_dim=feature_dim if feature_dim else LABEL_FEATURE_DIM,
                    dropout=0.25, seed=seed)
    if layer_id == LAYER_CAPTION:
        return dict(kind="caption", in_ch=in_ch, in_len=in_len,
                    conv_channels=[256, 512, 768, 768] if big else [32, 64],
                    hidden=1000 if big else 96, latent_dim=512 if big else 32,
                    feature_dim=feature_dim if feature_dim else CAPTION_FEATURE_DIM,
                    condition_dim=condition_dim if condition_dim else LABEL_FEATURE_DIM,
                    context_dim=512 if big else 64, dropout=0.25, seed=seed + 10)
    return dict(kind="thumbnail", in_ch=in_ch, in_len=in_len,
                widths=[4096, 3072] if big else [512, 384],
                latent_dim=2048 if big else 256,
                dec_widths=[3072, 4096] if big else [384, 512],
                dropout=0.25, seed=seed + 20)


def build_codec_from_config(config: dict) -> LayerCodec:
    cfg = dict(config)
    kind = cfg.pop("kind")
    cfg.pop("feature_dim_out", None)
    builders = {
        "label": build_label_codec,
        "caption": build_caption_codec,
        "thumbnail": build_thumbnail_codec,
    }
    if kind not in builders:
        raise ValueError(f"unknown codec kind {kind!r}")
    for key in ("conv_channels", "widths", "dec_widths"):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    return builders[kind](**cfg)


def _as_batch(codec: LayerCodec, x) -> np.ndarray:
    if isinstance(x, BrainSignal):
        x = x.data
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    expect = codec.input_shape
    if x.shape[1:] != expect:
        raise ValueError(f"codec expects {expect} input, got {x.shape[1:]}")
    return x


def layer_encode(codec: LayerCodec, x) -> np.ndarray:
    """Deterministic eval-mode latent for one recording (or a batch)."""
    arr = x.data if isinstance(x, BrainSignal) else np.asarray(x)
    single = arr.ndim == 2
    batch = _as_batch(codec, x)
    out = codec.encoder.apply(Var(batch), codec.encoder.param_vars(), mode="eval")
    latents = out.value
    return latents[0] if single else latents


def layer_decode(codec: LayerCodec, code: QuantizedCode,
                 condition: SemanticFeature | None = None):
    """Decode a quantized code into a feature or thumbnail."""
    if code.layer_id != codec.layer_id:
        raise ValueError(f"code layer {code.layer_id} != codec layer {codec.layer_id}")
    symbols = np.asarray(code.symbols, dtype=np.float64)
    if symbols.shape != (codec.latent_dim,):
        raise ValueError(f"expected {codec.latent_dim} symbols, got {symbols.shape}")
    ctx = None
    if codec.layer_id == LAYER_CAPTION:
        if condition is None or condition.level != "label":
            raise ValueError("caption-layer decode requires a label-level condition")
        if condition.vector.shape[0] != codec.config["condition_dim"]:
            raise ValueError(
                f"condition dim {condition.vector.shape[0]} != "
                f"{codec.config['condition_dim']}"
            )
        ctx = Var(condition.vector[None, :])
    elif condition is not None:
        raise ValueError(f"layer {codec.layer_id} takes no condition")
    out = codec.decoder.apply(
        Var(symbols[None, :]), codec.decoder.param_vars(), mode="eval", context=ctx
    ).value[0]
    if codec.layer_id == LAYER_LABEL:
        return SemanticFeature(out, "label")
    if codec.layer_id == LAYER_CAPTION:
        return SemanticFeature(out, "caption")
    return Thumbnail(np.clip(out.reshape(THUMB_SHAPE), 0.0, 1.0))


def _cosine(z: np.ndarray, z_hat: np.ndarray) -> float:
    nz = np.linalg.norm(z)
    nh = np.linalg.norm(z_hat)
    if nz == 0.0 or nh == 0.0:
        raise ValueError("cosine distortion undefined for zero-norm vectors")
    if np.array_equal(z, z_hat):
        return 1.0
    return float(np.clip(np.dot(z, z_hat) / (nz * nh), -1.0, 1.0))


def distortion(layer_id: int, z, z_hat, alpha: float = 4.0) -> float:
    """Reconstruction distortion: MSE plus (layers 1-2) a cosine penalty."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    z_hat = np.asarray(z_hat, dtype=np.float64).reshape(-1)
    if z.shape != z_hat.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {z_hat.shape}")
    mse = float(np.mean((z - z_hat) ** 2))
    if layer_id in (LAYER_LABEL, LAYER_CAPTION):
        return mse + alpha * (1.0 - _cosine(z, z_hat))
    if layer_id == LAYER_THUMBNAIL:
        return mse
    raise ValueError(f"bad layer_id {layer_id}")


def distortion_var(layer_id: int, z: np.ndarray, z_hat: Var, alpha: float = 4.0) -> Var:
    """Batch-mean distortion as an autodiff node; z is (B, D) constants."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != z_hat.value.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {z_hat.value.shape}")
    diff = ad.sub(ad.constant(z), z_hat)
    mse_rows = ad.vmean(ad.square(diff), axis=1)
    if layer_id == LAYER_THUMBNAIL:
        return ad.vmean(mse_rows)
    z_norms = np.linalg.norm(z, axis=1)
    if z_norms.min() == 0.0:
        raise ValueError("cosine distortion undefined for zero-norm targets")
    dots = ad.vsum(ad.mul(ad.constant(z), z_hat), axis=1)
    hat_norms = ad.sqrt(ad.vsum(ad.square(z_hat), axis=1))
    cos_rows = ad.div(dots, ad.mul(ad.constant(z_norms), hat_norms))
    penalty = ad.vmean(ad.sub(ad.constant(np.ones(len(z))), cos_rows))
    return ad.vmean(mse_rows) + ad.mul(ad.constant(alpha), penalty)


def rd_loss(rate_bits: float, distortion_value: float, lam: float) -> float:
    """Rate-distortion objective R + lambda * D."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return rate_bits + lam * distortion_value
