"""Layered containers: packing, slicing, bit accounting, and link budgets.

Shows the container format itself (no trained models needed): how per-layer
payloads pack into one stream, how a receiver slices a prefix, and how the
link simulator picks the largest prefix that fits a bandwidth budget.
"""

import numpy as np

from braincodec import ChannelModel, compute_bps, pack, payload_bits, simulate, \
    slice_stream, unpack
from braincodec.container import inspect_stream
from braincodec.linksim import LinkBudgetError

rng = np.random.default_rng(0)
payloads = {
    1: rng.integers(0, 256, size=120, dtype=np.uint8).tobytes(),   # label code
    2: rng.integers(0, 256, size=310, dtype=np.uint8).tobytes(),   # caption code
    3: rng.integers(0, 256, size=1350, dtype=np.uint8).tobytes(),  # thumbnail code
}
stream = pack(payloads, subject_id=4, with_crc=True)

print("=== one container, three layers ===")
for line in inspect_stream(stream):
    print(f"  {line}")

print("\n=== per-layer bit accounting ===")
bits = payload_bits(stream)
samples = 128 * 440
for lid, b in bits.items():
    print(f"  layer {lid}: {b:5d} bits -> {compute_bps(b, samples):.5f} bps")
total = sum(bits.values())
print(f"  total  : {total:5d} bits -> {compute_bps(total, samples):.5f} bps")

print("\n=== slicing to coarser semantic levels ===")
for k in (3, 2, 1):
    sliced = slice_stream(stream, k)
    kept, _ = unpack(sliced)
    print(f"  slice to layer {k}: {len(sliced):5d} bytes, layers {sorted(kept)}")

print("\n=== bandwidth-constrained delivery ===")
for budget in (40_000, 4_000, 1_200, 500):
    try:
        delivered, report = simulate(stream, ChannelModel(budget))
        print(f"  budget {budget:6d} bits -> delivered layers "
              f"{report.delivered_layers} ({report.delivered_bits} bits)")
    except LinkBudgetError as exc:
        print(f"  budget {budget:6d} bits -> delivery fails ({exc})")
