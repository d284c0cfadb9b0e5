"""Micro neural engine: dense arrays with reverse-mode autodiff, the layers,
loss, and optimizer the two classifiers need.

Every operation records its inputs on a tape; ``backward`` replays the tape
in reverse topological order and accumulates exact gradients into the
parameter tensors. Arithmetic runs in whatever dtype the parameters carry:
float32 for training, float64 for finite-difference verification. Any
non-finite value produced by an op is a hard error, never silently carried.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class DegenerateBatchError(ValueError):
    pass


class Tensor:
    """Dense array node; leaves with requires_grad are trainable parameters."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


def parameter(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a gradient back to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _const(value, like: Tensor) -> np.ndarray:
    return np.asarray(value, dtype=like.dtype)


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        return _make(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
            "add",
        )
    c = _const(b, a)
    return _make(a.data + c, (a,), lambda g: (_unbroadcast(g, a.shape),), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        ad, bd = a.data, b.data
        return _make(
            ad * bd,
            (a, b),
            lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)),
            "mul",
        )
    c = _const(b, a)
    return _make(a.data * c, (a,), lambda g: (_unbroadcast(g * c, a.shape),), "mul")


def pow_scalar(a: Tensor, p: float) -> Tensor:
    ad = a.data
    out = ad**p
    return _make(out, (a,), lambda g: (g * p * ad ** (p - 1.0),), f"pow({p})")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot matmul {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(
        ad @ bd,
        (a, b),
        lambda g: (g @ bd.T, ad.T @ g),
        "matmul",
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sum_axis(x: Tensor, axis, keepdims: bool = False) -> Tensor:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _make(x.data.sum(axis=axes, keepdims=keepdims), (x,), back, "sum")


def sum_all(x: Tensor) -> Tensor:
    return _make(x.data.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape),), "sum_all")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([x.data for x in xs], axis=axis)
    sizes = [x.data.shape[axis] for x in xs]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(data, tuple(xs), back, "concat")


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (x,), back, "softmax")


def gather_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Pick x[i, indices[i]] for every row i."""
    idx = np.asarray(indices)
    rows = np.arange(x.shape[0])

    def back(g):
        out = np.zeros_like(x.data)
        out[rows, idx] = g
        return (out,)

    return _make(x.data[rows, idx], (x,), back, "gather_rows")


def log_clamped(x: Tensor, eps: float = 1e-12) -> Tensor:
    """log(max(x, eps)); gradient is zero where the clamp was active."""
    xd = x.data
    clamped = xd < eps
    if clamped.any():
        logger.warning("clamped %d probabilities below %.0e before log", int(clamped.sum()), eps)
    safe = np.maximum(xd, eps)

    def back(g):
        return (np.where(clamped, 0.0, g / safe),)

    return _make(np.log(safe), (x,), back, "log")


# ---------------------------------------------------------------------------
# layers


def glorot_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int, rng: np.random.Generator, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1DLayer:
    """1D convolution over (batch, time, channels) with length-preserving zero
    padding; even kernel sizes put the extra pad on the right."""

    def __init__(
        self,
        kernel_size: int,
        in_channels: int,
        out_channels: int,
        *,
        rng: np.random.Generator,
        dtype=np.float32,
        name: str = "conv",
    ):
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.name = name
        fan_in = kernel_size * in_channels
        fan_out = kernel_size * out_channels
        self.weights = parameter(
            glorot_uniform((kernel_size, in_channels, out_channels), fan_in, fan_out, rng, dtype),
            f"{name}.weights",
        )
        self.bias = parameter(np.zeros(out_channels, dtype=dtype), f"{name}.bias")

    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]


def conv1d_forward(x: Tensor, layer: Conv1DLayer) -> Tensor:
    if x.data.ndim != 3 or x.shape[2] != layer.in_channels:
        raise ShapeError(
            f"{layer.name}: expected (B, T, {layer.in_channels}) input, got {x.shape}"
        )
    k = layer.kernel_size
    pad_l, pad_r = (k - 1) // 2, k // 2
    batch, time, _ = x.shape
    xp = np.pad(x.data, ((0, 0), (pad_l, pad_r), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, T, D, k)
    w, b = layer.weights, layer.bias
    out = np.tensordot(win, w.data, axes=([3, 2], [0, 1])) + b.data

    def back(g):
        dx_p = np.zeros_like(xp)
        d_win = np.tensordot(g, w.data, axes=([2], [2]))  # (B, T, k, D)
        for i in range(k):
            dx_p[:, i : i + time, :] += d_win[:, :, i, :]
        dw = np.moveaxis(np.tensordot(win, g, axes=([0, 1], [0, 1])), 1, 0)  # (k, D, C)
        return (dx_p[:, pad_l : pad_l + time, :], dw, g.sum(axis=(0, 1)))

    return _make(out, (x, w, b), back, layer.name)


def channel_concat(xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("channel_concat of zero feature maps")
    bt = {(x.shape[0], x.shape[1]) for x in xs}
    if len(bt) != 1:
        raise ShapeError(f"mismatched batch/time extents in channel_concat: {sorted(bt)}")
    return concat(xs, axis=-1)


class BatchNormLayer:
    """Per-channel batch normalization over all leading axes."""

    def __init__(self, channels: int, *, momentum: float = 0.1, epsilon: float = 1e-5, dtype=np.float32, name: str = "bn"):
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.name = name
        self.scale = parameter(np.ones(channels, dtype=dtype), f"{name}.scale")
        self.shift = parameter(np.zeros(channels, dtype=dtype), f"{name}.shift")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def parameters(self) -> list[Tensor]:
        return [self.scale, self.shift]


def batchnorm_forward(x: Tensor, layer: BatchNormLayer, training: bool) -> Tensor:
    if x.shape[-1] != layer.channels:
        raise ShapeError(f"{layer.name}: expected {layer.channels} channels, got {x.shape[-1]}")
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatchError(f"{layer.name}: batch normalization needs batch size >= 2 in training")
        axes = tuple(range(x.data.ndim - 1))
        n = float(np.prod([x.shape[a] for a in axes]))
        mean = mul(sum_axis(x, axes, keepdims=True), 1.0 / n)
        centered = sub(x, mean)
        var = mul(sum_axis(mul(centered, centered), axes, keepdims=True), 1.0 / n)
        inv_std = pow_scalar(add(var, layer.epsilon), -0.5)
        normed = mul(centered, inv_std)
        batch_mean = x.data.mean(axis=axes)
        batch_var = x.data.var(axis=axes)
        m = layer.momentum
        layer.running_mean = ((1.0 - m) * layer.running_mean + m * batch_mean).astype(layer.running_mean.dtype)
        layer.running_var = ((1.0 - m) * layer.running_var + m * batch_var).astype(layer.running_var.dtype)
    else:
        inv = 1.0 / np.sqrt(layer.running_var + layer.epsilon)
        normed = add(mul(x, inv.astype(x.dtype)), (-layer.running_mean * inv).astype(x.dtype))
    return add(mul(normed, layer.scale), layer.shift)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 3 or x.shape[1] < 1:
        raise ShapeError(f"expected (B, T>=1, C) input, got {x.shape}")
    return mul(sum_axis(x, 1), 1.0 / x.shape[1])


def masked_avg_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over time of the positions where mask is set; padding stays out."""
    if x.data.ndim != 3 or mask.shape != x.shape[:2]:
        raise ShapeError(f"mask of shape {mask.shape} does not fit input {x.shape}")
    counts = mask.sum(axis=1)
    if (counts < 1).any():
        raise ShapeError("every sequence needs at least one unmasked position")
    m = mask.astype(x.dtype)[:, :, None]
    pooled = sum_axis(mul(x, m), 1)
    inv = (1.0 / counts).astype(x.dtype)[:, None]
    return mul(pooled, inv)


class DenseLayer:
    def __init__(self, n_in: int, n_out: int, *, rng: np.random.Generator, dtype=np.float32, name: str = "dense"):
        self.n_in = n_in
        self.n_out = n_out
        self.name = name
        self.weights = parameter(glorot_uniform((n_in, n_out), n_in, n_out, rng, dtype), f"{name}.weights")
        self.bias = parameter(np.zeros(n_out, dtype=dtype), f"{name}.bias")

    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]


def dense_forward(x: Tensor, layer: DenseLayer) -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != layer.n_in:
        raise ShapeError(f"{layer.name}: expected (B, {layer.n_in}) input, got {x.shape}")
    return add(matmul(x, layer.weights), layer.bias)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return mul(x, keep)


# ---------------------------------------------------------------------------
# loss and optimizer


@dataclass(frozen=True)
class LossSpec:
    class_weights: tuple[float, ...]
    l2_weight: float = 0.0

    def __post_init__(self):
        if any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")
        if self.l2_weight < 0:
            raise ValueError("l2 weight must be nonnegative")


def weighted_cross_entropy(
    probs: Tensor,
    labels: np.ndarray,
    spec: LossSpec,
    l2_params: Sequence[Tensor] = (),
) -> Tensor:
    """Class-weighted cross entropy over probability rows, plus L2 on the
    given weight matrices (biases and normalization parameters excluded)."""
    labels = np.asarray(labels)
    batch, n_classes = probs.shape
    if len(spec.class_weights) != n_classes:
        raise ShapeError(f"{len(spec.class_weights)} class weights for {n_classes} classes")
    if labels.shape != (batch,) or labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels must be one class index per probability row")
    row_sums = probs.data.sum(axis=-1)
    if np.abs(row_sums - 1.0).max() > 1e-4:
        raise ValueError("probability rows must sum to 1")
    weights = np.asarray(spec.class_weights, dtype=probs.dtype)[labels]
    log_p = log_clamped(gather_rows(probs, labels))
    loss = mul(sum_all(mul(log_p, weights)), -1.0 / batch)
    if spec.l2_weight > 0 and l2_params:
        penalty = sum_all(mul(l2_params[0], l2_params[0]))
        for w in l2_params[1:]:
            penalty = add(penalty, sum_all(mul(w, w)))
        loss = add(loss, mul(penalty, spec.l2_weight))
    return loss


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[str, np.ndarray]:
    """Reverse-mode pass from a scalar loss; accumulates into .grad and
    returns the gradients of all named parameters reached."""
    if loss.data.ndim != 0:
        raise ShapeError("backward expects a scalar loss")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    named: dict[str, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
        else:
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {node.name or 'unnamed tensor'}")
            node.grad = g if node.grad is None else node.grad + g
            if node.name is not None:
                named[node.name] = node.grad
    return named


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grads_of(params: Sequence[Tensor]) -> list[np.ndarray]:
    missing = [p.name for p in params if p.grad is None]
    if missing:
        raise ValueError(f"no gradient recorded for {missing}; run backward first")
    return [p.grad for p in params]


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], learning_rate: float, **kwargs) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kwargs)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One Adam update with bias correction; mutates parameters in place."""
    if len(params) != len(state.m):
        raise ShapeError("optimizer state does not match the parameter list")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.name}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / (1.0 - b1**t)
        v_hat = state.v[i] / (1.0 - b2**t)
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
