"""Shared construction helpers for randomized coder tests."""

import numpy as np

from braincodec.entropy import PMF_TOTAL, PmfTable, quantize_pmf


def random_table(rng, n_channels=None, length=None) -> PmfTable:
    n_channels = n_channels or int(rng.integers(1, 10))
    length = length or int(rng.integers(2, 260))
    offsets = rng.integers(-120, 120, size=n_channels)
    probs = []
    for _ in range(n_channels):
        shape = rng.choice(["flat", "peaked", "random"])
        if shape == "flat":
            p = np.ones(length)
        elif shape == "peaked":
            centre = rng.integers(0, length)
            p = np.exp(-0.5 * ((np.arange(length) - centre)
                               / (1 + 4 * rng.random())) ** 2)
        else:
            p = rng.random(length) + 1e-9
        probs.append(quantize_pmf(p))
    return PmfTable.from_probs(offsets, probs)


def sample_symbols(rng, table: PmfTable, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    for c in range(table.n_channels):
        mask = (np.arange(n) % table.n_channels) == c
        values = table.offsets[c] + np.arange(len(table.probs[c]))
        out[mask] = rng.choice(values, size=int(mask.sum()),
                               p=table.probs[c] / PMF_TOTAL)
    return out


def random_payloads(rng, layers):
    return {lid: bytes(rng.integers(0, 256, size=int(rng.integers(1, 400)),
                                    dtype=np.uint8).tobytes()) for lid in layers}
