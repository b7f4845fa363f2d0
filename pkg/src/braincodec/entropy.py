"""Quantization, learned factorized densities, and PMF tables.

The density models each latent channel with its own monotone CDF built from
four composed elementwise stages (softplus-positive weights, bounded tanh
gates, final sigmoid).  Training evaluates it through autodiff; coding
quantizes it into fixed 16-bit integer PMF tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var

__all__ = [
    "PMF_TOTAL_BITS",
    "PMF_TOTAL",
    "LIKELIHOOD_FLOOR",
    "HALF_SUPPORT",
    "quantize",
    "add_uniform_noise",
    "FactorizedDensity",
    "likelihood",
    "estimate_rate_bits",
    "rate_bits_var",
    "PmfTable",
    "quantize_pmf",
    "build_pmf_table",
]

PMF_TOTAL_BITS = 16
PMF_TOTAL = 1 << PMF_TOTAL_BITS
LIKELIHOOD_FLOOR = 2.0 ** -24
# Symbol support spans the rounded channel median +/- HALF_SUPPORT.
HALF_SUPPORT = 64

_FILTERS = (1, 3, 3, 3, 1)  # four composed stages of intermediate width 3


def quantize(y: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("quantize requires finite input")
    return np.copysign(np.floor(np.abs(y) + 0.5), y).astype(np.int64)


def add_uniform_noise(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Training-time quantization surrogate: add U(-0.5, 0.5) noise."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("add_uniform_noise requires finite input")
    return y + rng.uniform(-0.5, 0.5, size=y.shape)


class FactorizedDensity:
    """Independent per-channel univariate density with learnable CDF.

    The CDF logit is a chain of channels-parallel affine maps with strictly
    positive (softplus) weights and bounded residual gates, so each channel's
    CDF is strictly increasing on all of R.  At ``init_scale = s`` the initial
    CDF approximates a logistic with scale ``s``.
    """

    def __init__(self, channels: int, init_scale: float = 10.0, seed: int = 0):
        if channels < 1:
            raise ValueError("channels must be positive")
        self.channels = channels
        self.init_scale = float(init_scale)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        scale = self.init_scale ** (1.0 / (len(_FILTERS) - 1))
        self.params: dict[str, np.ndarray] = {}
        for k in range(len(_FILTERS) - 1):
            f_in, f_out = _FILTERS[k], _FILTERS[k + 1]
            init = np.log(np.expm1(1.0 / (scale * f_out)))
            self.params[f"dens.m{k}"] = np.full((channels, f_out, f_in), init)
            self.params[f"dens.b{k}"] = rng.uniform(-0.05, 0.05, size=(channels, f_out, 1))
            if k < len(_FILTERS) - 2:
                self.params[f"dens.a{k}"] = np.zeros((channels, f_out, 1))

    @property
    def n_stages(self) -> int:
        return len(_FILTERS) - 1

    def param_vars(self) -> dict[str, Var]:
        return {name: Var(arr) for name, arr in self.params.items()}

    def cdf_logits_var(self, v: Var, params: dict[str, Var]) -> Var:
        """CDF logits for v of shape (channels, 1, N); output same shape."""
        logits = v
        for k in range(self.n_stages):
            logits = ad.matmul(ad.softplus(params[f"dens.m{k}"]), logits)
            logits = logits + params[f"dens.b{k}"]
            if k < self.n_stages - 1:
                gate = ad.tanh(params[f"dens.a{k}"])
                logits = logits + ad.mul(gate, ad.tanh(logits))
        return logits

    def cdf_logits(self, v: np.ndarray) -> np.ndarray:
        """Numpy-only CDF logits for v of shape (channels, N)."""
        v = np.asarray(v, dtype=np.float64)
        var = self.cdf_logits_var(
            Var(v[:, None, :]), self.param_vars()
        )
        return var.value[:, 0, :]

    def likelihood_var(self, v: Var, params: dict[str, Var]) -> Var:
        """Probability mass of the unit bin around each entry of v (B, channels)."""
        batch = v.value.shape[0]
        if v.value.ndim != 2 or v.value.shape[1] != self.channels:
            raise ValueError(
                f"expected (B, {self.channels}), got {v.value.shape}"
            )
        stacked = ad.reshape(ad.transpose(v, (1, 0)), (self.channels, 1, batch))
        upper = ad.sigmoid(self.cdf_logits_var(stacked + 0.5, params))
        lower = ad.sigmoid(self.cdf_logits_var(stacked - 0.5, params))
        p = ad.lower_bound(upper - lower, LIKELIHOOD_FLOOR)
        return ad.transpose(ad.reshape(p, (self.channels, batch)), (1, 0))


def likelihood(density: FactorizedDensity, v: np.ndarray) -> np.ndarray:
    """Per-channel bin probabilities for v of shape (channels,) or (B, channels)."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    out = density.likelihood_var(Var(v), density.param_vars()).value
    return out[0] if single else out


def estimate_rate_bits(density: FactorizedDensity, v: np.ndarray) -> float:
    """Total information content of v in bits under the density."""
    p = likelihood(density, v)
    return float(np.sum(-np.log2(p)))


def rate_bits_var(density: FactorizedDensity, v: Var, params: dict[str, Var]) -> Var:
    """Per-record rate in bits for a batch (B, channels); returns shape (B,)."""
    p = density.likelihood_var(v, params)
    return ad.vsum(ad.neg(ad.log2(p)), axis=1)


@dataclass
class PmfTable:
    """Per-channel integer PMFs quantized to a fixed 16-bit total.

    ``offsets[c]`` is the integer value of the first support point of channel
    c, ``probs[c]`` its quantized masses (each >= 1, summing to 2**16), and
    ``cums[c]`` the exclusive cumulative array of length ``len(probs[c]) + 1``.
    """

    offsets: np.ndarray
    probs: list[np.ndarray]
    cums: list[np.ndarray]

    @property
    def n_channels(self) -> int:
        return len(self.probs)

    def lengths(self) -> np.ndarray:
        return np.array([len(p) for p in self.probs], dtype=np.int64)

    def validate(self) -> None:
        if len(self.probs) != len(self.cums) or len(self.probs) != len(self.offsets):
            raise ValueError("inconsistent channel counts in PMF table")
        for c, (p, cum) in enumerate(zip(self.probs, self.cums)):
            if len(p) < 2:
                raise ValueError(f"channel {c}: support must have >= 2 points")
            if p.min() < 1:
                raise ValueError(f"channel {c}: zero-mass symbol")
            if int(p.sum()) != PMF_TOTAL:
                raise ValueError(f"channel {c}: total {int(p.sum())} != {PMF_TOTAL}")
            if len(cum) != len(p) + 1 or cum[0] != 0 or cum[-1] != PMF_TOTAL:
                raise ValueError(f"channel {c}: bad cumulative array")
            if np.any(np.diff(cum) <= 0):
                raise ValueError(f"channel {c}: cumulative not strictly increasing")

    def clamp(self, symbols: np.ndarray) -> np.ndarray:
        """Clamp integer symbols into each channel's support (cycling channels)."""
        symbols = np.asarray(symbols, dtype=np.int64)
        idx = np.arange(symbols.size) % self.n_channels
        lo = self.offsets[idx]
        hi = lo + self.lengths()[idx] - 1
        return np.clip(symbols, lo, hi)

    @classmethod
    def from_probs(cls, offsets, probs) -> "PmfTable":
        probs = [np.asarray(p, dtype=np.int64) for p in probs]
        cums = [np.concatenate(([0], np.cumsum(p))).astype(np.int64) for p in probs]
        table = cls(offsets=np.asarray(offsets, dtype=np.int64), probs=probs, cums=cums)
        table.validate()
        return table


def quantize_pmf(p: np.ndarray, total: int = PMF_TOTAL) -> np.ndarray:
    """Quantize a positive PMF to integers summing to `total`.

    Largest-remainder apportionment with a floor of 1 per symbol: every
    symbol stays codable, and the totals are exact.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or len(p) < 2:
        raise ValueError("pmf must be a vector with >= 2 entries")
    if len(p) > total:
        raise ValueError("support longer than the integer total")
    p = np.maximum(p, 1e-30)
    ideal = p * (total / p.sum())
    q = np.floor(ideal).astype(np.int64)
    remainder = ideal - q
    q = np.maximum(q, 1)
    deficit = total - int(q.sum())
    if deficit > 0:
        order = np.argsort(-remainder, kind="stable")
        q[order[:deficit]] += 1
    elif deficit < 0:
        # The floor of 1 overshot; take the excess back from the largest
        # masses, where the relative distortion is smallest.
        need = -deficit
        for i in np.argsort(-q, kind="stable"):
            take = min(int(q[i]) - 1, need)
            q[i] -= take
            need -= take
            if need == 0:
                break
    if int(q.sum()) != total:
        raise AssertionError("pmf renormalization failed to balance")
    return q


def build_pmf_table(density: FactorizedDensity, channel_medians: np.ndarray) -> PmfTable:
    """Tabulate the density on [median-64, median+64] per channel."""
    medians = np.asarray(channel_medians, dtype=np.int64)
    if medians.shape != (density.channels,):
        raise ValueError(
            f"expected {density.channels} channel medians, got {medians.shape}"
        )
    length = 2 * HALF_SUPPORT + 1
    offsets = medians - HALF_SUPPORT
    # (channels, length) grid of integer support points
    grid = offsets[:, None] + np.arange(length)[None, :]
    var = density.likelihood_var(
        Var(grid.T.astype(np.float64)), density.param_vars()
    )
    masses = var.value.T  # (channels, length)
    probs = [quantize_pmf(masses[c]) for c in range(density.channels)]
    return PmfTable.from_probs(offsets, probs)
