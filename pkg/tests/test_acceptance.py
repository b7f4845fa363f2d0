"""Acceptance gate: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion.  The end-to-end and sweep criteria train real models; the whole
module takes a few minutes on a desktop CPU.
"""

import math
import time

import numpy as np
import pytest

from helpers import random_payloads, random_table, sample_symbols

from braincodec import autodiff as ad
from braincodec.autodiff import Var
from braincodec.codec import distortion, preset_config
from braincodec.container import (compute_bps, pack, payload_bits, slice_stream,
                                  unpack)
from braincodec.dataio import SyntheticSpec, split_dataset, synthesize_dataset
from braincodec.entropy import PMF_TOTAL, FactorizedDensity
from braincodec.errors import FormatError
from braincodec.linksim import ChannelModel, LinkBudgetError, simulate
from braincodec.metrics import bleu_n, rouge1, ssim
from braincodec.nn import (Activation, ConvResBlock, Film, GlobalAvgPool, Linear,
                           Network, ResBlock1d, gradient_check)
from braincodec.pipeline import CodecStack, decode_stream, encode_records
from braincodec.rangecoder import range_decode, range_encode
from braincodec.retrieval import EmbeddingDatabase
from braincodec.trainer import TrainConfig, train_layer


def _report(name: str, detail: str = ""):
    print(f"PASS: {name}" + (f" ({detail})" if detail else ""))


# ---------------------------------------------------------------------------
# Entropy coder: 1000 random tables x 10^4 symbols, lossless, near-entropy,
# under 60 s.
# ---------------------------------------------------------------------------

def test_entropy_coder_lossless_and_tight():
    rng = np.random.default_rng(2024)
    n_tables = 1000
    n_symbols = 10 ** 4
    t0 = time.perf_counter()
    for i in range(n_tables):
        table = random_table(rng, n_channels=int(rng.integers(1, 33)))
        symbols = sample_symbols(rng, table, n_symbols)
        payload = range_encode(symbols, table)
        decoded = range_decode(payload, table, n_symbols)
        assert np.array_equal(decoded, symbols), f"round-trip failed on table {i}"
        ideal = 0.0
        lengths = table.lengths()
        ch = np.arange(n_symbols) % table.n_channels
        idx = symbols - table.offsets[ch]
        prob_rows = np.stack(table.probs) if np.all(lengths == lengths[0]) else None
        if prob_rows is not None:
            ideal = float(-np.log2(prob_rows[ch, idx] / PMF_TOTAL).sum())
        else:
            ideal = float(sum(-math.log2(table.probs[c][j] / PMF_TOTAL)
                              for c, j in zip(ch, idx)))
        assert len(payload) * 8 <= 1.01 * ideal + 64 * 8, (
            f"table {i}: payload {len(payload) * 8} bits vs entropy {ideal:.0f}"
        )
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"entropy coder took {elapsed:.1f} s"
    _report("entropy coder lossless within 1% of entropy",
            f"{n_tables} tables x {n_symbols} symbols in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# Gradient integrity: every layer type under finite differences, < 1e-4.
# ---------------------------------------------------------------------------

def _mse(out):
    return ad.vmean(ad.square(out))


def test_gradient_integrity_every_layer_type():
    rng = np.random.default_rng(11)
    worst = {}

    net = Network([Linear(6, 4)], seed=1)
    worst["linear"] = gradient_check(net, rng.standard_normal((3, 6)), _mse, seed=2)

    net = Network([ConvResBlock(3, 5, 3, 2), ConvResBlock(5, 5, 3, 1),
                   GlobalAvgPool()], seed=2)
    worst["conv-resblock"] = gradient_check(
        net, rng.standard_normal((2, 3, 16)), _mse, seed=3)

    net = Network([ResBlock1d(5, 8), ResBlock1d(8, 4)], seed=3)
    for k, v in net.params.items():
        net.params[k] = v + 0.05 * rng.standard_normal(v.shape)
    worst["resblock1d"] = gradient_check(net, rng.standard_normal((3, 5)), _mse, seed=4)

    net = Network([Film(6), ResBlock1d(6, 6), Film(6)],
                  context_layers=[Linear(4, 5), Activation(), Linear(5, 5)], seed=4)
    for k, v in net.params.items():
        net.params[k] = v + 0.05 * rng.standard_normal(v.shape)
    worst["film"] = gradient_check(net, rng.standard_normal((2, 6)), _mse,
                                   context=rng.standard_normal((2, 4)), seed=5)

    dens = FactorizedDensity(5, init_scale=1.5, seed=5)
    v = rng.standard_normal((2, 5)) * 2

    def density_loss():
        out = dens.likelihood_var(Var(v), dens.param_vars())
        return float(ad.vsum(ad.neg(ad.log2(out))).value)

    pvars = dens.param_vars()
    loss = ad.vsum(ad.neg(ad.log2(dens.likelihood_var(Var(v), pvars))))
    loss.backward()
    err = 0.0
    for name, arr in dens.params.items():
        for _ in range(6):
            idx = tuple(rng.integers(0, s) for s in arr.shape)
            orig = arr[idx]
            arr[idx] = orig + 1e-3
            fp = density_loss()
            arr[idx] = orig - 1e-3
            fm = density_loss()
            arr[idx] = orig
            num = (fp - fm) / 2e-3
            ana = float(pvars[name].grad[idx])
            err = max(err, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    worst["factorized-density"] = err

    # full label-layer encoder as one composite check
    enc = Network([ConvResBlock(4, 8), ConvResBlock(8, 12), GlobalAvgPool(),
                   ResBlock1d(12, 16), ResBlock1d(16, 6)], seed=6)
    worst["full-encoder"] = gradient_check(
        enc, rng.standard_normal((2, 4, 32)), _mse, n_samples=12, seed=7)

    for name, err in worst.items():
        assert err < 1e-4, f"{name} gradient error {err:.2e}"
    _report("gradient integrity on every layer type",
            ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


# ---------------------------------------------------------------------------
# Synthetic end-to-end label pipeline + scalability agreement.
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def e2e_world():
    spec = SyntheticSpec(n_classes=8, records_per_class=50, channels=16,
                         samples=128, sample_rate_hz=256, noise_sigma=1.0, seed=7)
    signals, manifest = synthesize_dataset(spec)
    manifest = split_dataset(signals, manifest, (0.8, 0.1, 0.1), seed=7)
    emb = np.eye(64)[:8]  # orthogonal 64-dim label embeddings
    db = EmbeddingDatabase(np.arange(8), [f"class_{i}" for i in range(8)], emb)
    return spec, signals, manifest, db


@pytest.fixture(scope="module")
def trained_label_layer(e2e_world):
    spec, signals, manifest, db = e2e_world
    t0 = time.perf_counter()
    config = TrainConfig(
        layer_id=1, lam=1e3, epochs=40, batch_size=16, lr=3e-4, seed=0,
        target_source="label_db",
        codec_config=preset_config("desk", 1, spec.channels, spec.samples,
                                   feature_dim=64, seed=0),
    )
    assert config.epochs <= 50
    ckpt = train_layer(config, signals, manifest, db)
    return ckpt, time.perf_counter() - t0


def test_synthetic_end_to_end_label_pipeline(e2e_world, trained_label_layer):
    spec, signals, manifest, db = e2e_world
    ckpt, train_seconds = trained_label_layer
    t0 = time.perf_counter()
    stack = CodecStack({1: ckpt})
    test_idx = manifest.indices("test")
    test_signals = [signals[i] for i in test_idx]
    streams = encode_records(stack, test_signals, max_layer=1)
    hits = 0
    total_bits = 0
    for stream, idx in zip(streams, test_idx):
        total_bits += payload_bits(stream)[1]
        rec = decode_stream(stack, stream, max_layer=1, label_db=db)
        hits += int(rec.prediction.class_id == signals[idx].class_id)
    top1 = hits / len(test_idx)
    bps = compute_bps(total_bits, spec.channels * spec.samples * len(test_idx))
    elapsed = train_seconds + time.perf_counter() - t0
    assert top1 >= 0.90, f"held-out top-1 {top1:.3f} < 0.90"
    assert bps <= 0.1, f"bps {bps:.4f} > 0.1"
    assert elapsed < 20 * 60, f"end-to-end run took {elapsed:.0f} s"
    _report("synthetic end-to-end label pipeline",
            f"top-1 {top1:.3f} @ {bps:.4f} bps in {elapsed:.0f} s")


def test_scalability_slice_classification_agrees(e2e_world, trained_label_layer):
    spec, signals, manifest, db = e2e_world
    label_ckpt, _ = trained_label_layer
    # quick secondary layers so streams really carry three layers
    rng = np.random.default_rng(1)
    cap_db = EmbeddingDatabase(
        np.arange(len(signals)), [f"caption {i}" for i in range(len(signals))],
        rng.standard_normal((len(signals), 32)))
    cap_cfg = dict(kind="caption", in_ch=16, in_len=128, conv_channels=[16, 24],
                   hidden=32, latent_dim=12, feature_dim=32, condition_dim=64,
                   context_dim=24, dropout=0.25, seed=2)
    cap_ckpt = train_layer(
        TrainConfig(layer_id=2, lam=40.0, epochs=2, batch_size=16, lr=1e-3,
                    seed=2, target_source="caption_db", codec_config=cap_cfg),
        signals, manifest, cap_db, condition_checkpoint=label_ckpt)
    from braincodec.dataio import synthesize_thumbnails
    thumbs = synthesize_thumbnails(
        SyntheticSpec(n_classes=8, records_per_class=50, channels=16, samples=128,
                      sample_rate_hz=256, noise_sigma=1.0, seed=7))
    thumb_cfg = dict(kind="thumbnail", in_ch=16, in_len=128, widths=[96, 64],
                     latent_dim=48, dec_widths=[64, 96], dropout=0.25, seed=3)
    thumb_ckpt = train_layer(
        TrainConfig(layer_id=3, lam=4e4, epochs=2, batch_size=16, lr=1e-3,
                    seed=3, target_source="thumbnails", codec_config=thumb_cfg),
        signals, manifest, thumbs)

    stack = CodecStack({1: label_ckpt, 2: cap_ckpt, 3: thumb_ckpt})
    test_idx = manifest.indices("test")
    test_signals = [signals[i] for i in test_idx]
    streams = encode_records(stack, test_signals, max_layer=3)
    agree = 0
    for stream in streams:
        full = decode_stream(stack, stream, max_layer=3, label_db=db)
        sliced = decode_stream(stack, slice_stream(stream, 1), max_layer=1,
                               label_db=db)
        agree += int(full.prediction.class_id == sliced.prediction.class_id)
        assert np.array_equal(full.label_feature.vector,
                              sliced.label_feature.vector)
    assert agree == len(streams), f"slice agreement {agree}/{len(streams)}"
    _report("layer-1 slice classification agrees with full stream",
            f"{agree}/{len(streams)} signals")


# ---------------------------------------------------------------------------
# Lambda monotonicity: higher lambda never costs rate or gains distortion.
# ---------------------------------------------------------------------------

def test_lambda_monotonicity():
    spec = SyntheticSpec(n_classes=8, records_per_class=30, channels=8,
                         samples=64, sample_rate_hz=256, noise_sigma=1.5, seed=3)
    signals, manifest = synthesize_dataset(spec)
    manifest = split_dataset(signals, manifest, (0.8, 0.1, 0.1), seed=3)
    rng = np.random.default_rng(11)
    emb = np.linalg.qr(rng.standard_normal((32, 32)))[0][:8]
    db = EmbeddingDatabase(np.arange(8), [f"class_{i}" for i in range(8)], emb)
    test_idx = manifest.indices("test")

    results = []
    for lam in (4e2, 4e3, 4e4):
        cfg = dict(kind="label", in_ch=8, in_len=64, conv_channels=[16, 32],
                   hidden=48, latent_dim=12, feature_dim=32, dropout=0.25, seed=0)
        config = TrainConfig(layer_id=1, lam=lam, epochs=250, batch_size=16,
                             lr=1e-3, seed=0, target_source="label_db",
                             codec_config=cfg)
        ckpt = train_layer(config, signals, manifest, db)
        stack = CodecStack({1: ckpt})
        test_signals = [signals[i] for i in test_idx]
        streams = encode_records(stack, test_signals, max_layer=1)
        bits = sum(payload_bits(s)[1] for s in streams)
        bps = compute_bps(bits, spec.channels * spec.samples * len(test_idx))
        dist = float(np.mean([
            distortion(1, emb[signals[i].class_id],
                       decode_stream(stack, s, max_layer=1).label_feature.vector,
                       4.0)
            for s, i in zip(streams, test_idx)
        ]))
        results.append((lam, bps, dist))

    for (l1, b1, d1), (l2, b2, d2) in zip(results, results[1:]):
        assert b2 >= b1, f"bps decreased from {b1:.5f} (lam={l1}) to {b2:.5f} (lam={l2})"
        assert d2 <= d1, f"distortion rose from {d1:.5f} (lam={l1}) to {d2:.5f} (lam={l2})"
    _report("lambda monotonicity",
            "; ".join(f"lam={l:g}: bps={b:.4f}, d1={d:.4f}" for l, b, d in results))


# ---------------------------------------------------------------------------
# Metric oracles at 1e-6.
# ---------------------------------------------------------------------------

def test_metric_oracles():
    assert abs(bleu_n("the cat", "the cat sat", 1) - math.exp(-0.5)) < 1e-6
    assert abs(bleu_n("the cat", "the cat sat", 1) - 0.6065306597) < 1e-6
    assert abs(bleu_n("a b c d", "a b c d", 4) - 1.0) < 1e-6
    assert abs(bleu_n("the cat sat", "the cat sat down", 2)
               - math.exp(1 - 4 / 3)) < 1e-6
    assert bleu_n("x y", "p q", 1) == 0.0

    p, r, f = rouge1("a b", "b c")
    assert abs(p - 0.5) < 1e-6 and abs(r - 0.5) < 1e-6 and abs(f - 0.5) < 1e-6
    assert rouge1("same text", "same text") == (1.0, 1.0, 1.0)

    a = np.full((32, 32, 3), 0.5)
    b = np.full((32, 32, 3), 0.75)
    # hand evaluation: means 0.5/0.75, zero variances, L=1, K1=0.01, K2=0.03
    expected = ((2 * 0.5 * 0.75 + 1e-4) * 9e-4) / ((0.25 + 0.5625 + 1e-4) * 9e-4)
    assert abs(ssim(a, b) - expected) < 1e-6
    img = np.random.default_rng(0).random((32, 32, 3))
    assert abs(ssim(img, img) - 1.0) < 1e-6
    _report("metric oracles (BLEU, ROUGE-1, SSIM)",
            f"BLEU brevity fixture {bleu_n('the cat', 'the cat sat', 1):.6f}")


# ---------------------------------------------------------------------------
# bps arithmetic fixture at the reference magnitude.
# ---------------------------------------------------------------------------

def test_bps_reference_fixture():
    bps = compute_bps(980, 56320)
    assert abs(bps - 0.017400) <= 5e-5
    _report("bps arithmetic fixture", f"980 bits / 56320 samples = {bps:.6f}")


# ---------------------------------------------------------------------------
# Container robustness: 10^4 cycles; corruption and truncation detection.
# ---------------------------------------------------------------------------

def test_container_robustness():
    rng = np.random.default_rng(99)
    n_cycles = 10 ** 4
    for i in range(n_cycles):
        n_layers = int(rng.integers(1, 4))
        payloads = random_payloads(rng, (1, 2, 3)[:n_layers])
        subject = int(rng.integers(0, 256))
        stream = pack(payloads, subject_id=subject, with_crc=True)
        max_layer = int(rng.integers(1, n_layers + 1))
        sliced = slice_stream(stream, max_layer)
        out, subj = unpack(sliced)
        assert subj == subject
        assert out == {l: payloads[l] for l in payloads if l <= max_layer}

        pos = int(rng.integers(4, len(sliced)))
        delta = int(rng.integers(1, 256))
        corrupted = bytearray(sliced)
        corrupted[pos] = (corrupted[pos] + delta) & 0xFF
        try:
            unpack(bytes(corrupted))
            raise AssertionError(f"cycle {i}: corruption at byte {pos} undetected")
        except FormatError:
            pass

        cut = int(rng.integers(1, len(sliced)))
        try:
            unpack(sliced[:cut])
            raise AssertionError(f"cycle {i}: truncation to {cut} bytes undetected")
        except FormatError:
            pass
    _report("container robustness", f"{n_cycles} cycles with corruption checks")


# ---------------------------------------------------------------------------
# Link simulator maximality over 10^3 random streams and budgets.
# ---------------------------------------------------------------------------

def test_link_simulator_maximality():
    rng = np.random.default_rng(123)
    n_runs = 10 ** 3
    delivered_count = 0
    for _ in range(n_runs):
        n_layers = int(rng.integers(1, 4))
        payloads = random_payloads(rng, (1, 2, 3)[:n_layers])
        stream = pack(payloads, subject_id=0, with_crc=bool(rng.integers(0, 2)))
        sizes = {k: len(slice_stream(stream, k)) * 8 for k in range(1, n_layers + 1)}
        budget = int(rng.integers(8, sizes[n_layers] + 800))
        try:
            delivered, report = simulate(stream, ChannelModel(budget))
        except LinkBudgetError:
            assert budget < sizes[1]
            continue
        delivered_count += 1
        assert report.delivered_bits <= budget
        top = report.delivered_layers[-1]
        assert report.delivered_layers == list(range(1, top + 1))
        if top < n_layers:
            assert sizes[top + 1] > budget, "a further layer would have fit"
        payloads_out, _ = unpack(delivered)
        assert sorted(payloads_out) == report.delivered_layers
    _report("link simulator maximality",
            f"{delivered_count}/{n_runs} budgets deliverable, all maximal")


# ---------------------------------------------------------------------------
# Frozen wire-format vectors (cross-version stability).
# ---------------------------------------------------------------------------

def test_golden_wire_fixtures():
    from braincodec.entropy import PmfTable, quantize_pmf

    masses = np.exp(-0.5 * ((np.arange(17) - 8) / 2.5) ** 2)
    table = PmfTable.from_probs(
        [-8, 12], [quantize_pmf(masses), quantize_pmf(masses[::-1] + 0.05)])
    symbols = np.array([-3, 15, 0, 20, -8, 12, 5, 17, -1, 14, 2, 19])
    payload = range_encode(symbols, table)
    assert payload.hex() == "001525cb4ada55b3ae7b26"
    assert np.array_equal(range_decode(payload, table, len(symbols)), symbols)

    stream = pack({1: bytes.fromhex("a1b2c3"), 2: bytes.fromhex("0011223344"),
                   3: bytes.fromhex("ff")}, subject_id=4, with_crc=True)
    assert stream.hex() == ("45494443010104030103000000a1b2c302050000000011223344"
                            "0301000000fff03531fd")
    _report("golden wire-format vectors", "range coder + container bytes frozen")
