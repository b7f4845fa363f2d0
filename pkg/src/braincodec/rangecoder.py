"""Deterministic byte-oriented range coder.

Conventions (fixed so independent implementations can interoperate):

* 32-bit range register, initialized to ``0xFFFFFFFF``.
* Probabilities are 16-bit integers summing to exactly ``2**16`` per channel.
* Renormalization emits one byte whenever the range drops below ``2**24``.
* Carries are resolved LZMA-style through a cache byte and a pending-0xFF
  counter; the first emitted byte is always ``0x00``.
* ``finish`` flushes five bytes, so an empty message encodes to 5 bytes and
  the decoder always consumes the payload exactly to its end.

Symbols are integer values; symbol ``i`` of a message is coded with channel
``i mod n_channels`` of the table.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .entropy import PMF_TOTAL, PmfTable
from .errors import FormatError

__all__ = ["range_encode", "range_decode"]

_TOP = 1 << 24
_MASK32 = (1 << 32) - 1
_CARRY_EDGE = 0xFF000000


class _Encoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def encode(self, cum_lo: int, freq: int) -> None:
        r = self.range // PMF_TOTAL
        self.low += r * cum_lo
        self.range = r * freq
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self._shift_low()

    def _shift_low(self) -> None:
        low = self.low
        if low < _CARRY_EDGE or low > _MASK32:
            carry = low >> 32
            out = self.out
            out.append((self.cache + carry) & 0xFF)
            ff = (0xFF + carry) & 0xFF
            for _ in range(self.cache_size - 1):
                out.append(ff)
            self.cache = (low >> 24) & 0xFF
            self.cache_size = 0
        self.cache_size += 1
        self.low = (low << 8) & _MASK32

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


def _channel_lookup(table: PmfTable, symbols: np.ndarray):
    """Per-symbol (cum_lo, freq) with channels cycling over the message."""
    n = symbols.size
    ch = np.arange(n) % table.n_channels
    lengths = table.lengths()
    lo = table.offsets[ch]
    idx = symbols - lo
    bad = (idx < 0) | (idx >= lengths[ch])
    if bad.any():
        where = int(np.argmax(bad))
        raise ValueError(
            f"symbol {int(symbols[where])} outside table support at position {where}"
        )
    if np.all(lengths == lengths[0]):
        cum_arr = np.stack(table.cums)
        prob_arr = np.stack(table.probs)
        cum_lo = cum_arr[ch, idx]
        freq = prob_arr[ch, idx]
    else:
        cum_lo = np.array([table.cums[c][i] for c, i in zip(ch, idx)])
        freq = np.array([table.probs[c][i] for c, i in zip(ch, idx)])
    return cum_lo.tolist(), freq.tolist()


def range_encode(symbols: np.ndarray, table: PmfTable) -> bytes:
    """Encode integer symbols against the table; deterministic bytes out."""
    symbols = np.asarray(symbols, dtype=np.int64)
    enc = _Encoder()
    if symbols.size:
        cum_lo, freq = _channel_lookup(table, symbols)
        encode = enc.encode
        for lo, f in zip(cum_lo, freq):
            encode(lo, f)
    return enc.finish()


def range_decode(data: bytes, table: PmfTable, n_symbols: int) -> np.ndarray:
    """Recover exactly `n_symbols` symbols; raises FormatError on truncation."""
    if n_symbols < 0:
        raise ValueError("n_symbols must be non-negative")
    if len(data) < 5:
        raise FormatError("range-coded payload shorter than minimum flush")
    cums = [c.tolist() for c in table.cums]
    offsets = table.offsets.tolist()
    n_ch = table.n_channels
    pos = 5
    code = int.from_bytes(data[1:5], "big")
    rng = _MASK32
    data_len = len(data)
    out = np.empty(n_symbols, dtype=np.int64)
    for i in range(n_symbols):
        cum = cums[i % n_ch]
        r = rng // PMF_TOTAL
        dv = code // r
        if dv >= PMF_TOTAL:
            dv = PMF_TOTAL - 1
        s = bisect_right(cum, dv) - 1
        code -= r * cum[s]
        rng = r * (cum[s + 1] - cum[s])
        while rng < _TOP:
            if pos >= data_len:
                raise FormatError("truncated range-coded payload")
            code = (code << 8) | data[pos]
            pos += 1
            rng <<= 8
        out[i] = s + offsets[i % n_ch]
    if pos != data_len:
        raise FormatError(
            f"range-coded payload has {data_len - pos} trailing bytes"
        )
    return out
