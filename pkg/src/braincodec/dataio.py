"""Dataset handling: file formats, preprocessing, synthesis, and splits.

Dataset file layout (all little-endian):

    magic "EEGD" | version u8=1 | channels u16 | samples u32 |
    sample_rate u32 | record_count u32
    per record: class_id u16 | subject_id u8 | float32 payload,
    channel-major (channels x samples)

The manifest is UTF-8 JSON with keys "labels" (class_id -> text),
"captions" (record_index -> text) and "split" (record_index -> train|val|test).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

__all__ = [
    "BrainSignal",
    "DatasetManifest",
    "SyntheticSpec",
    "design_bandpass_fir",
    "preprocess",
    "synthesize_dataset",
    "synthesize_thumbnails",
    "split_dataset",
    "save_dataset",
    "load_dataset",
]

_MAGIC = b"EEGD"
_VERSION = 1
_HEADER = struct.Struct("<4sBHIII")
_RECORD_HEAD = struct.Struct("<HB")
_SPLITS = ("train", "val", "test")
FIR_TAPS = 129


@dataclass
class BrainSignal:
    """One multichannel recording with class/subject metadata."""

    data: np.ndarray  # (channels, samples) float64 in memory, float32 on disk
    class_id: int
    subject_id: int
    sample_rate_hz: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"signal must be (C, T) with C,T >= 1, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("signal contains non-finite samples")
        if self.class_id < 0 or self.subject_id < 0:
            raise ValueError("class_id and subject_id must be non-negative")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]


@dataclass
class DatasetManifest:
    labels: dict[int, str]
    captions: dict[int, str] = field(default_factory=dict)
    split: dict[int, str] = field(default_factory=dict)

    def validate_against(self, signals: list[BrainSignal]) -> None:
        for i, sig in enumerate(signals):
            if sig.class_id not in self.labels:
                raise FormatError(
                    f"record {i} has class_id {sig.class_id} missing from manifest labels"
                )
        if self.split:
            covered = set(self.split)
            expected = set(range(len(signals)))
            if covered != expected:
                raise FormatError("manifest split does not cover record indices exactly")
            bad = {v for v in self.split.values()} - set(_SPLITS)
            if bad:
                raise FormatError(f"unknown split names: {sorted(bad)}")

    def indices(self, part: str) -> list[int]:
        if part not in _SPLITS:
            raise ValueError(f"split must be one of {_SPLITS}")
        return sorted(i for i, s in self.split.items() if s == part)

    def save(self, path) -> None:
        doc = {
            "labels": {str(k): v for k, v in sorted(self.labels.items())},
            "captions": {str(k): v for k, v in sorted(self.captions.items())},
            "split": {str(k): v for k, v in sorted(self.split.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read manifest {path}: {exc}") from exc
        for key in ("labels", "captions", "split"):
            if key not in doc:
                raise FormatError(f"manifest missing key {key!r}")
        return cls(
            labels={int(k): str(v) for k, v in doc["labels"].items()},
            captions={int(k): str(v) for k, v in doc["captions"].items()},
            split={int(k): str(v) for k, v in doc["split"].items()},
        )


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 8
    records_per_class: int = 50
    channels: int = 16
    samples: int = 128
    sample_rate_hz: int = 256
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_classes", "records_per_class", "channels", "samples",
                     "sample_rate_hz"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def design_bandpass_fir(band_lo_hz: float, band_hi_hz: float, sample_rate_hz: int,
                        n_taps: int = FIR_TAPS) -> np.ndarray:
    """Linear-phase windowed-sinc bandpass (Hamming window)."""
    if not (0.0 < band_lo_hz < band_hi_hz < sample_rate_hz / 2.0):
        raise ValueError(
            f"need 0 < lo < hi < fs/2, got lo={band_lo_hz}, hi={band_hi_hz}, "
            f"fs={sample_rate_hz}"
        )
    if n_taps % 2 != 1:
        raise ValueError("tap count must be odd for a type-I linear-phase filter")
    mid = n_taps // 2
    n = np.arange(n_taps) - mid
    f_lo = band_lo_hz / sample_rate_hz
    f_hi = band_hi_hz / sample_rate_hz
    taps = 2.0 * f_hi * np.sinc(2.0 * f_hi * n) - 2.0 * f_lo * np.sinc(2.0 * f_lo * n)
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n_taps) / (n_taps - 1))
    return taps * window


def preprocess(raw: BrainSignal, band_lo_hz: float = 55.0, band_hi_hz: float = 95.0,
               win_start_ms: float = 20.0, win_end_ms: float = 460.0) -> BrainSignal:
    """Zero-phase FIR bandpass (reflection-padded) followed by windowing."""
    fs = raw.sample_rate_hz
    taps = design_bandpass_fir(band_lo_hz, band_hi_hz, fs)
    duration_ms = raw.samples * 1000.0 / fs
    if not (0.0 <= win_start_ms < win_end_ms <= duration_ms):
        raise ValueError(
            f"window {win_start_ms}-{win_end_ms} ms outside record "
            f"duration {duration_ms} ms"
        )
    start = int(round(win_start_ms * fs / 1000.0))
    end = int(round(win_end_ms * fs / 1000.0))

    data = raw.data
    half = len(taps) // 2
    if raw.samples <= half:
        raise ValueError(
            f"record of {raw.samples} samples is too short for a "
            f"{len(taps)}-tap filter"
        )
    padded = np.pad(data, ((0, 0), (half, half)), mode="reflect")
    filtered = np.empty_like(data)
    for ch in range(data.shape[0]):
        filtered[ch] = np.convolve(padded[ch], taps, mode="valid")
    out = filtered[:, start:end]
    return BrainSignal(
        data=out,
        class_id=raw.class_id,
        subject_id=raw.subject_id,
        sample_rate_hz=fs,
    )


def _class_template(spec: SyntheticSpec, class_id: int) -> np.ndarray:
    """Deterministic per-class pattern: class-indexed sinusoids, unit RMS."""
    rng = np.random.default_rng(
        np.random.SeedSequence([0xE1D, class_id, spec.channels, spec.samples,
                                spec.sample_rate_hz])
    )
    fs = spec.sample_rate_hz
    if fs >= 200:
        f_lo, f_hi = 56.0, 94.0
    else:
        f_lo, f_hi = 0.25 * fs / 2, 0.9 * fs / 2
    t = np.arange(spec.samples) / fs
    template = np.zeros((spec.channels, spec.samples))
    n_components = 3
    for j in range(n_components):
        freq = f_lo + (f_hi - f_lo) * ((class_id * n_components + j) % 17 + 0.5) / 17.0
        amp = rng.uniform(0.5, 1.0, size=spec.channels)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=spec.channels)
        template += amp[:, None] * np.sin(2.0 * np.pi * freq * t[None, :] + phase[:, None])
    rms = np.sqrt(np.mean(template ** 2))
    return template / rms


def synthesize_dataset(spec: SyntheticSpec) -> tuple[list[BrainSignal], DatasetManifest]:
    """Generate a deterministic labelled dataset: class template plus noise."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    templates = [_class_template(spec, c) for c in range(spec.n_classes)]
    signals: list[BrainSignal] = []
    captions: dict[int, str] = {}
    labels = {c: f"class_{c}" for c in range(spec.n_classes)}
    index = 0
    for c in range(spec.n_classes):
        for r in range(spec.records_per_class):
            noise = rng.standard_normal((spec.channels, spec.samples)) * spec.noise_sigma
            signals.append(BrainSignal(
                data=(templates[c] + noise).astype(np.float32).astype(np.float64),
                class_id=c,
                subject_id=index % 6,
                sample_rate_hz=spec.sample_rate_hz,
            ))
            captions[index] = f"a synthetic recording of {labels[c]} pattern {r}"
            index += 1
    manifest = DatasetManifest(labels=labels, captions=captions, split={})
    return signals, manifest


def synthesize_thumbnails(spec: SyntheticSpec, size: int = 32) -> np.ndarray:
    """One deterministic smooth RGB pattern per record (shared within a class)."""
    n = spec.n_classes * spec.records_per_class
    out = np.empty((n, size, size, 3), dtype=np.float64)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for c in range(spec.n_classes):
        rng = np.random.default_rng(np.random.SeedSequence([0x1A6, c, size]))
        img = np.zeros((size, size, 3))
        for _ in range(4):
            fx, fy = rng.uniform(0.3, 2.0, size=2)
            phase = rng.uniform(0, 2 * np.pi, size=3)
            weight = rng.uniform(0.2, 1.0, size=3)
            grid = 2 * np.pi * (fx * xx + fy * yy) / size
            wave = np.sin(grid[:, :, None] + phase[None, None, :])
            img += weight[None, None, :] * wave
        img = (img - img.min()) / (img.max() - img.min())
        for r in range(spec.records_per_class):
            out[c * spec.records_per_class + r] = img
    return out


def split_dataset(signals: list[BrainSignal], manifest: DatasetManifest,
                  ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                  seed: int = 0) -> DatasetManifest:
    """Per-class stratified train/val/test assignment, deterministic per seed."""
    if len(ratios) != len(_SPLITS):
        raise ValueError(f"need {len(_SPLITS)} ratios")
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must all be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    by_class: dict[int, list[int]] = {}
    for i, sig in enumerate(signals):
        by_class.setdefault(sig.class_id, []).append(i)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    split: dict[int, str] = {}
    for class_id in sorted(by_class):
        members = np.array(by_class[class_id])
        n = len(members)
        counts = _apportion(n, ratios)
        if min(counts) < 1:
            raise ValueError(
                f"class {class_id} has {n} records, too few for splits {ratios}"
            )
        order = rng.permutation(n)
        shuffled = members[order]
        bounds = np.cumsum(counts)
        for part, chunk in zip(_SPLITS, np.split(shuffled, bounds[:-1])):
            for idx in chunk:
                split[int(idx)] = part
    return DatasetManifest(labels=dict(manifest.labels),
                           captions=dict(manifest.captions), split=split)


def _apportion(n: int, ratios) -> list[int]:
    ideal = np.asarray(ratios, dtype=np.float64) * n
    counts = np.floor(ideal).astype(int)
    rem = ideal - counts
    for i in np.argsort(-rem, kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def save_dataset(path, signals: list[BrainSignal]) -> None:
    if not signals:
        raise ValueError("cannot save an empty dataset")
    c, t, fs = signals[0].channels, signals[0].samples, signals[0].sample_rate_hz
    for i, sig in enumerate(signals):
        if (sig.channels, sig.samples, sig.sample_rate_hz) != (c, t, fs):
            raise ValueError(f"record {i} shape/rate differs from record 0")
        if sig.class_id > 0xFFFF or sig.subject_id > 0xFF:
            raise ValueError(f"record {i} ids exceed the file format's field widths")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, c, t, fs, len(signals)))
        for sig in signals:
            fh.write(_RECORD_HEAD.pack(sig.class_id, sig.subject_id))
            fh.write(np.ascontiguousarray(sig.data, dtype="<f4").tobytes())


def load_dataset(path, manifest_path=None) -> tuple[list[BrainSignal], DatasetManifest | None]:
    """Read a dataset file (and optionally its manifest, validated against it)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise FormatError("dataset file shorter than its header")
    magic, version, channels, samples, rate, count = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    record_size = _RECORD_HEAD.size + 4 * channels * samples
    expected = _HEADER.size + count * record_size
    if len(blob) != expected:
        raise FormatError(
            f"dataset payload is {len(blob)} bytes, header implies {expected}"
        )
    signals = []
    off = _HEADER.size
    for _ in range(count):
        class_id, subject_id = _RECORD_HEAD.unpack_from(blob, off)
        off += _RECORD_HEAD.size
        data = np.frombuffer(blob, dtype="<f4", count=channels * samples, offset=off)
        off += 4 * channels * samples
        signals.append(BrainSignal(
            data=data.reshape(channels, samples).astype(np.float64),
            class_id=class_id, subject_id=subject_id, sample_rate_hz=rate,
        ))
    manifest = None
    if manifest_path is not None:
        manifest = DatasetManifest.load(manifest_path)
        manifest.validate_against(signals)
    return signals, manifest
