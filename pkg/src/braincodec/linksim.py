"""Bandwidth-constrained lossless link with prefix layer-dropping."""

from __future__ import annotations

from dataclasses import dataclass, field

from .container import slice_stream, unpack
from .errors import CodecError

__all__ = ["ChannelModel", "DeliveryReport", "LinkBudgetError", "simulate",
           "simulate_batch"]


class LinkBudgetError(CodecError):
    """The budget cannot carry even the first layer."""


@dataclass(frozen=True)
class ChannelModel:
    budget_bits_per_signal: int
    policy: str = "prefix_drop"

    def __post_init__(self):
        if self.budget_bits_per_signal <= 0:
            raise ValueError("budget must be positive")
        if self.policy != "prefix_drop":
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass
class DeliveryReport:
    delivered_layers: list[int]
    delivered_bits: int
    dropped_layers: list[int]
    log: list[str] = field(default_factory=list)


def simulate(stream: bytes, channel: ChannelModel) -> tuple[bytes, DeliveryReport]:
    """Deliver the maximal layer prefix whose container fits the budget."""
    payloads, _ = unpack(stream)
    layer_ids = sorted(payloads)
    chosen = None
    chosen_bytes = None
    for k in layer_ids:
        candidate = slice_stream(stream, k)
        if len(candidate) * 8 <= channel.budget_bits_per_signal:
            chosen = k
            chosen_bytes = candidate
        else:
            break
    if chosen is None:
        raise LinkBudgetError(
            f"budget {channel.budget_bits_per_signal} bits is below the "
            f"layer-{layer_ids[0]} container size of {len(slice_stream(stream, layer_ids[0])) * 8} bits"
        )
    delivered = [l for l in layer_ids if l <= chosen]
    dropped = [l for l in layer_ids if l > chosen]
    report = DeliveryReport(
        delivered_layers=delivered,
        delivered_bits=len(chosen_bytes) * 8,
        dropped_layers=dropped,
        log=[f"budget={channel.budget_bits_per_signal} delivered={delivered} "
             f"bits={len(chosen_bytes) * 8} dropped={dropped}"],
    )
    return chosen_bytes, report


def simulate_batch(streams: list[bytes], channel: ChannelModel):
    """Per-signal delivery for a batch; raises on the first infeasible signal."""
    results = []
    for i, stream in enumerate(streams):
        delivered, report = simulate(stream, channel)
        report.log.insert(0, f"signal={i}")
        results.append((delivered, report))
    return results
