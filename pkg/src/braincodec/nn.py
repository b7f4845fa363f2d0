"""Trainable network engine: layer specs, forward/backward, Adam, checks.

Networks are described by an ordered list of layer specs and hold their
parameters as named float64 numpy arrays.  The forward pass builds an
autodiff graph, so `forward` + `backward` give exact reverse-mode gradients
of the recorded computation.  Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var

__all__ = [
    "Linear",
    "ResBlock1d",
    "ConvResBlock",
    "Dropout",
    "Activation",
    "Film",
    "Flatten",
    "GlobalAvgPool",
    "Network",
    "Tape",
    "forward",
    "backward",
    "film_modulate",
    "AdamState",
    "adam_init",
    "adam_step",
    "gradient_check",
    "params_digest",
]


@dataclass(frozen=True)
class Linear:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class ResBlock1d:
    """Dense residual block on feature vectors: skip + zero-initialized branch."""

    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class ConvResBlock:
    """Temporal residual block: strided conv branch plus strided 1x1 skip."""

    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 2


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.25


@dataclass(frozen=True)
class Activation:
    """Standalone SiLU nonlinearity."""


@dataclass(frozen=True)
class Film:
    """Feature modulation gamma * h + beta, with gamma/beta mapped from context."""

    width: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class GlobalAvgPool:
    """Mean over the trailing time axis: (B, C, L) -> (B, C)."""


LayerSpec = (Linear | ResBlock1d | ConvResBlock | Dropout | Activation | Film
             | Flatten | GlobalAvgPool)


def _kaiming_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_layer(layer: LayerSpec, prefix: str, ctx_dim: int | None,
                rng: np.random.Generator, params: dict[str, np.ndarray]) -> None:
    if isinstance(layer, Linear):
        params[f"{prefix}.w"] = _kaiming_uniform(rng, layer.in_dim, (layer.in_dim, layer.out_dim))
        params[f"{prefix}.b"] = np.zeros(layer.out_dim)
    elif isinstance(layer, ResBlock1d):
        params[f"{prefix}.u_w"] = _kaiming_uniform(rng, layer.in_dim, (layer.in_dim, layer.out_dim))
        params[f"{prefix}.u_b"] = np.zeros(layer.out_dim)
        # Zero-initialized final projection: the block starts as its skip path.
        params[f"{prefix}.v_w"] = np.zeros((layer.out_dim, layer.out_dim))
        params[f"{prefix}.v_b"] = np.zeros(layer.out_dim)
        if layer.in_dim != layer.out_dim:
            params[f"{prefix}.p_w"] = _kaiming_uniform(
                rng, layer.in_dim, (layer.in_dim, layer.out_dim)
            )
    elif isinstance(layer, ConvResBlock):
        k = layer.kernel
        params[f"{prefix}.w1"] = _kaiming_uniform(
            rng, layer.in_ch * k, (layer.out_ch, layer.in_ch, k)
        )
        params[f"{prefix}.b1"] = np.zeros(layer.out_ch)
        params[f"{prefix}.w2"] = np.zeros((layer.out_ch, layer.out_ch, k))
        params[f"{prefix}.b2"] = np.zeros(layer.out_ch)
        if layer.in_ch != layer.out_ch or layer.stride != 1:
            params[f"{prefix}.p_w"] = _kaiming_uniform(
                rng, layer.in_ch, (layer.out_ch, layer.in_ch, 1)
            )
    elif isinstance(layer, Film):
        if ctx_dim is None:
            raise ValueError("Film layer requires a context dimension")
        params[f"{prefix}.g_w"] = np.zeros((ctx_dim, layer.width))
        params[f"{prefix}.g_b"] = np.ones(layer.width)
        params[f"{prefix}.b_w"] = np.zeros((ctx_dim, layer.width))
        params[f"{prefix}.b_b"] = np.zeros(layer.width)
    elif isinstance(layer, (Dropout, Activation, Flatten, GlobalAvgPool)):
        pass
    else:
        raise TypeError(f"unknown layer spec: {layer!r}")


class Network:
    """Ordered layer stack with optional context extractor for Film layers.

    `context_layers` describe a small network applied to the raw conditioning
    vector; every Film layer in the trunk consumes its output.
    """

    def __init__(self, layers: list[LayerSpec], context_layers: list[LayerSpec] | None = None,
                 seed: int = 0):
        self.layers = list(layers)
        self.context_layers = list(context_layers) if context_layers else []
        if any(isinstance(l, Film) for l in self.layers) and not self.context_layers:
            raise ValueError("network has Film layers but no context extractor")
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        ctx_dim = None
        if self.context_layers:
            for i, layer in enumerate(self.context_layers):
                _init_layer(layer, f"ctx{i}", None, rng, self.params)
            ctx_dim = _out_width(self.context_layers)
        for i, layer in enumerate(self.layers):
            _init_layer(layer, f"t{i}", ctx_dim, rng, self.params)

    def param_vars(self) -> dict[str, Var]:
        return {name: Var(arr) for name, arr in self.params.items()}

    def has_dropout(self) -> bool:
        return any(isinstance(l, Dropout) and l.rate > 0 for l in self.layers)

    def apply(self, x: Var, params: dict[str, Var], mode: str = "eval",
              rng: np.random.Generator | None = None, context: Var | None = None) -> Var:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        ctx_feat = None
        if self.context_layers:
            if context is None:
                raise ValueError("network requires a conditioning feature")
            ctx_feat = context
            for i, layer in enumerate(self.context_layers):
                ctx_feat = _apply_layer(layer, ctx_feat, f"ctx{i}", params, mode, rng, None)
        h = x
        for i, layer in enumerate(self.layers):
            h = _apply_layer(layer, h, f"t{i}", params, mode, rng, ctx_feat)
        if not np.isfinite(h.value).all():
            raise FloatingPointError("non-finite activation in network output")
        return h


def _out_width(layers: list[LayerSpec]) -> int:
    for layer in reversed(layers):
        if isinstance(layer, (Linear, ResBlock1d)):
            return layer.out_dim
        if isinstance(layer, ConvResBlock):
            return layer.out_ch
        if isinstance(layer, Film):
            return layer.width
    raise ValueError("cannot infer output width of layer stack")


def _apply_layer(layer: LayerSpec, h: Var, prefix: str, params: dict[str, Var],
                 mode: str, rng: np.random.Generator | None, ctx: Var | None) -> Var:
    if isinstance(layer, Linear):
        if h.value.ndim != 2 or h.value.shape[1] != layer.in_dim:
            raise ValueError(
                f"linear layer expects (B, {layer.in_dim}), got {h.value.shape}"
            )
        return ad.matmul(h, params[f"{prefix}.w"]) + params[f"{prefix}.b"]
    if isinstance(layer, ResBlock1d):
        if h.value.ndim != 2 or h.value.shape[1] != layer.in_dim:
            raise ValueError(
                f"resblock1d expects (B, {layer.in_dim}), got {h.value.shape}"
            )
        skip = h if layer.in_dim == layer.out_dim else ad.matmul(h, params[f"{prefix}.p_w"])
        branch = ad.silu(ad.matmul(h, params[f"{prefix}.u_w"]) + params[f"{prefix}.u_b"])
        branch = ad.matmul(branch, params[f"{prefix}.v_w"]) + params[f"{prefix}.v_b"]
        return skip + branch
    if isinstance(layer, ConvResBlock):
        if h.value.ndim != 3 or h.value.shape[1] != layer.in_ch:
            raise ValueError(
                f"conv resblock expects (B, {layer.in_ch}, L), got {h.value.shape}"
            )
        if layer.in_ch == layer.out_ch and layer.stride == 1:
            skip = h
        else:
            zero_bias = ad.constant(np.zeros(layer.out_ch))
            skip = ad.conv1d(h, params[f"{prefix}.p_w"], zero_bias, stride=layer.stride)
        branch = ad.silu(
            ad.conv1d(h, params[f"{prefix}.w1"], params[f"{prefix}.b1"], stride=layer.stride)
        )
        branch = ad.conv1d(branch, params[f"{prefix}.w2"], params[f"{prefix}.b2"], stride=1)
        return skip + branch
    if isinstance(layer, Activation):
        return ad.silu(h)
    if isinstance(layer, Dropout):
        if mode == "train" and layer.rate > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout requires an rng")
            keep = 1.0 - layer.rate
            mask = (rng.random(h.value.shape) < keep).astype(np.float64) / keep
            return ad.mul(h, ad.constant(mask))
        return h
    if isinstance(layer, Film):
        if ctx is None:
            raise ValueError("Film layer requires a conditioning feature")
        gamma = ad.matmul(ctx, params[f"{prefix}.g_w"]) + params[f"{prefix}.g_b"]
        beta = ad.matmul(ctx, params[f"{prefix}.b_w"]) + params[f"{prefix}.b_b"]
        return film_modulate(h, gamma, beta)
    if isinstance(layer, Flatten):
        batch = h.value.shape[0]
        return ad.reshape(h, (batch, -1))
    if isinstance(layer, GlobalAvgPool):
        if h.value.ndim != 3:
            raise ValueError(f"global pool expects (B, C, L), got {h.value.shape}")
        return ad.mean_over_axis(h, axis=2)
    raise TypeError(f"unknown layer spec: {layer!r}")


def film_modulate(h: Var | np.ndarray, gamma: Var | np.ndarray, beta: Var | np.ndarray) -> Var:
    """Elementwise affine modulation gamma * h + beta."""
    h = h if isinstance(h, Var) else Var(h)
    gamma = gamma if isinstance(gamma, Var) else Var(gamma)
    beta = beta if isinstance(beta, Var) else Var(beta)
    if gamma.value.shape[-1] != h.value.shape[-1] or beta.value.shape[-1] != h.value.shape[-1]:
        raise ValueError(
            f"modulation width mismatch: h {h.value.shape}, gamma {gamma.value.shape}, "
            f"beta {beta.value.shape}"
        )
    return ad.mul(gamma, h) + beta


@dataclass
class Tape:
    """Recorded forward pass: enough to run exact reverse-mode gradients."""

    output: Var
    input: Var
    params: dict[str, Var]
    context: Var | None = None


def forward(net: Network, x: np.ndarray, mode: str = "eval",
            rng: np.random.Generator | None = None,
            context: np.ndarray | None = None) -> tuple[np.ndarray, Tape]:
    """Run the network, returning the output array and the gradient tape."""
    x_var = Var(np.asarray(x, dtype=np.float64))
    ctx_var = Var(np.asarray(context, dtype=np.float64)) if context is not None else None
    pvars = net.param_vars()
    out = net.apply(x_var, pvars, mode=mode, rng=rng, context=ctx_var)
    return out.value.copy(), Tape(output=out, input=x_var, params=pvars, context=ctx_var)


def backward(tape: Tape, output_grad: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients of the taped computation for the given output gradient."""
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != tape.output.value.shape:
        raise ValueError(
            f"output_grad shape {output_grad.shape} does not match "
            f"taped output {tape.output.value.shape}"
        )
    tape.output.backward(seed=output_grad)
    param_grads = {name: var.grad for name, var in tape.params.items()}
    return param_grads, tape.input.grad


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], lr: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8) -> AdamState:
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One Adam update with bias correction; mutates params and state in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def gradient_check(net: Network, x: np.ndarray, loss_fn,
                   context: np.ndarray | None = None,
                   n_samples: int = 24, step: float = 1e-3,
                   seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn` maps the network output Var to a scalar Var using autodiff ops;
    its value path is reused for the numeric side.  Runs in eval mode so the
    computation is identical across the perturbed evaluations.
    """
    x = np.asarray(x, dtype=np.float64)
    ctx = np.asarray(context, dtype=np.float64) if context is not None else None

    pvars = net.param_vars()
    x_var = Var(x)
    ctx_var = Var(ctx) if ctx is not None else None
    loss = loss_fn(net.apply(x_var, pvars, mode="eval", context=ctx_var))
    loss.backward()
    analytic = {name: var.grad for name, var in pvars.items()}

    def eval_loss() -> float:
        pv = net.param_vars()
        cv = Var(ctx) if ctx is not None else None
        out = net.apply(Var(x), pv, mode="eval", context=cv)
        return float(loss_fn(out).value)

    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for name in sorted(net.params):
        arr = net.params[name]
        if arr.size == 0:
            continue
        n_here = min(n_samples, arr.size)
        flat_idx = rng.choice(arr.size, size=n_here, replace=False)
        for fi in flat_idx:
            idx = np.unravel_index(fi, arr.shape)
            orig = arr[idx]
            arr[idx] = orig + step
            f_plus = eval_loss()
            arr[idx] = orig - step
            f_minus = eval_loss()
            arr[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[name][idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel


def params_digest(params: dict[str, np.ndarray]) -> str:
    """Order-independent content hash of a named parameter set."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name]).tobytes())
    return h.hexdigest()
