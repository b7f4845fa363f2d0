"""Layered container: packing, slicing, bit accounting, corruption detection."""

import numpy as np
import pytest

from braincodec.container import (compute_bps, inspect_stream, pack, payload_bits,
                                  slice_stream, unpack)
from braincodec.errors import FormatError


def random_payloads(rng, layers):
    return {lid: bytes(rng.integers(0, 256, size=int(rng.integers(1, 400)),
                                    dtype=np.uint8).tobytes()) for lid in layers}


class TestPack:
    def test_header_arithmetic(self):
        stream = pack({1: bytes(123)}, subject_id=2, with_crc=True)
        assert len(stream) == 8 + 5 + 123 + 4
        stream = pack({1: bytes(123)}, subject_id=2, with_crc=False)
        assert len(stream) == 8 + 5 + 123

    def test_caption_without_label_rejected(self):
        with pytest.raises(ValueError):
            pack({2: b"abc"})

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        payloads = random_payloads(rng, (1, 2, 3))
        stream = pack(payloads, subject_id=5)
        out, subject = unpack(stream)
        assert subject == 5
        assert out == payloads

    def test_empty_layer_set_rejected(self):
        with pytest.raises(ValueError):
            pack({})

    def test_unknown_layer_rejected(self):
        with pytest.raises(ValueError):
            pack({1: b"x", 4: b"y"})


class TestSlice:
    def test_slice_to_one_preserves_label_payload(self):
        rng = np.random.default_rng(1)
        payloads = random_payloads(rng, (1, 2, 3))
        stream = pack(payloads, subject_id=1)
        sliced = slice_stream(stream, 1)
        out, _ = unpack(sliced)
        assert out == {1: payloads[1]}

    def test_full_slice_is_identity(self):
        rng = np.random.default_rng(2)
        payloads = random_payloads(rng, (1, 2, 3))
        stream = pack(payloads, subject_id=1)
        assert slice_stream(stream, 3) == stream

    def test_slice_to_zero_rejected(self):
        stream = pack({1: b"x"})
        with pytest.raises(ValueError):
            slice_stream(stream, 0)

    def test_slice_idempotent(self):
        rng = np.random.default_rng(3)
        stream = pack(random_payloads(rng, (1, 2, 3)))
        assert slice_stream(slice_stream(stream, 2), 1) == slice_stream(stream, 1)


class TestBps:
    def test_reference_magnitude(self):
        assert abs(compute_bps(980, 56320) - 0.017400568) < 1e-9

    def test_zero_bits(self):
        assert compute_bps(0, 10) == 0.0

    def test_layer_additive_excluding_headers(self):
        stream = pack({1: bytes(100), 2: bytes(50)})
        bits = payload_bits(stream)
        total = compute_bps(sum(bits.values()), 56320)
        assert total == compute_bps(bits[1], 56320) + compute_bps(bits[2], 56320)

    def test_zero_samples_rejected(self):
        with pytest.raises(ValueError):
            compute_bps(10, 0)

    def test_header_inclusion_flag(self):
        stream = pack({1: bytes(10)}, with_crc=True)
        without = payload_bits(stream)
        with_headers = payload_bits(stream, include_headers=True)
        assert without[1] == 80
        assert with_headers[1] == len(stream) * 8


class TestRobustness:
    def test_single_byte_corruptions_detected(self):
        rng = np.random.default_rng(4)
        stream = pack(random_payloads(rng, (1, 2)), subject_id=3, with_crc=True)
        for _ in range(300):
            pos = int(rng.integers(4, len(stream)))  # CRC covers bytes after magic
            delta = int(rng.integers(1, 256))
            corrupted = bytearray(stream)
            corrupted[pos] = (corrupted[pos] + delta) & 0xFF
            with pytest.raises(FormatError):
                unpack(bytes(corrupted))

    def test_truncations_raise(self):
        rng = np.random.default_rng(5)
        stream = pack(random_payloads(rng, (1, 3)), with_crc=True)
        for cut in range(1, len(stream)):
            with pytest.raises(FormatError):
                unpack(stream[:cut])

    def test_trailing_garbage_raises(self):
        stream = pack({1: b"abc"})
        with pytest.raises(FormatError):
            unpack(stream + b"\x00")

    def test_bad_magic(self):
        stream = bytearray(pack({1: b"abc"}))
        stream[0] = ord("X")
        with pytest.raises(FormatError):
            unpack(bytes(stream))


def test_inspect_lines_stable():
    stream = pack({1: bytes(7), 3: bytes(9)}, subject_id=4, with_crc=True)
    lines = inspect_stream(stream)
    assert "magic=EIDC" in lines
    assert "subject_id=4" in lines
    assert "layer1_bytes=7" in lines
    assert "layer3_bytes=9" in lines
    assert f"total_bytes={len(stream)}" in lines
