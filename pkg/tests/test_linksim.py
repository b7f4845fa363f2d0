"""Link simulator: prefix maximality under bit budgets."""

import numpy as np
import pytest

from braincodec.container import pack, slice_stream, unpack
from braincodec.linksim import (ChannelModel, LinkBudgetError, simulate,
                                simulate_batch)


def make_stream(rng, layers=(1, 2, 3)):
    payloads = {lid: bytes(rng.integers(0, 256, size=int(rng.integers(5, 200)),
                                        dtype=np.uint8).tobytes()) for lid in layers}
    return pack(payloads, subject_id=int(rng.integers(0, 6)))


class TestSimulate:
    def test_slack_budget_delivers_everything(self):
        rng = np.random.default_rng(0)
        stream = make_stream(rng)
        delivered, report = simulate(stream, ChannelModel(len(stream) * 8 + 1000))
        assert delivered == stream
        assert report.delivered_layers == [1, 2, 3]
        assert report.dropped_layers == []

    def test_budget_between_one_and_two_layers(self):
        rng = np.random.default_rng(1)
        stream = make_stream(rng)
        size1 = len(slice_stream(stream, 1)) * 8
        size2 = len(slice_stream(stream, 2)) * 8
        delivered, report = simulate(stream, ChannelModel((size1 + size2) // 2))
        assert report.delivered_layers == [1]
        assert report.dropped_layers == [2, 3]
        assert delivered == slice_stream(stream, 1)

    def test_budget_below_first_layer_fails(self):
        rng = np.random.default_rng(2)
        stream = make_stream(rng)
        size1 = len(slice_stream(stream, 1)) * 8
        with pytest.raises(LinkBudgetError):
            simulate(stream, ChannelModel(size1 - 8))

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            ChannelModel(0)

    def test_maximality_property(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n_layers = int(rng.integers(1, 4))
            stream = make_stream(rng, layers=(1, 2, 3)[:n_layers])
            sizes = {k: len(slice_stream(stream, k)) * 8
                     for k in range(1, n_layers + 1)}
            budget = int(rng.integers(sizes[1], sizes[n_layers] + 400))
            delivered, report = simulate(stream, ChannelModel(budget))
            assert report.delivered_bits <= budget
            top = report.delivered_layers[-1]
            if top < n_layers:
                assert sizes[top + 1] > budget  # one more layer would not fit
            # delivered bytes always parse
            payloads, _ = unpack(delivered)
            assert sorted(payloads) == report.delivered_layers

    def test_delivered_set_is_prefix(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            stream = make_stream(rng)
            budget = int(rng.integers(120, len(stream) * 8 + 64))
            try:
                _, report = simulate(stream, ChannelModel(budget))
            except LinkBudgetError:
                continue
            layers = report.delivered_layers
            assert layers == list(range(1, len(layers) + 1))


def test_batch_reports_per_signal():
    rng = np.random.default_rng(5)
    streams = [make_stream(rng) for _ in range(5)]
    budget = max(len(s) for s in streams) * 8 + 8
    results = simulate_batch(streams, ChannelModel(budget))
    assert len(results) == 5
    for delivered, report in results:
        assert report.delivered_bits == len(delivered) * 8
