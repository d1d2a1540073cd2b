"""Dense tensors with taped reverse-mode differentiation, AdamW and lr scheduling.

Forward operations run on numpy arrays (float32 by default, float64 for
gradient checking). While a Tape is active, every operation that touches a
tracked tensor records itself together with a closure that maps the output
gradient to input gradients; backward() replays the tape in reverse with
additive accumulation. Reductions keep numpy's fixed sequential order, so the
same inputs always produce bit-identical values and gradients.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import InvalidArgumentError, ShapeError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Dense row-major array, optionally participating in differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "tracked")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if not np.issubdtype(arr.dtype, np.floating):
                arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tracked = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


@dataclass
class _TapeEntry:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


_ACTIVE = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_ACTIVE, "stack", None)
    if stack is None:
        stack = []
        _ACTIVE.stack = stack
    return stack


class Tape:
    """Execution-ordered record of differentiable operations."""

    def __init__(self) -> None:
        self.entries: list[_TapeEntry] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack().pop()
        return False


def _record(
    output: Tensor,
    inputs: tuple[Tensor, ...],
    backward_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]],
) -> None:
    stack = _tape_stack()
    if not stack:
        return
    if not any(t.tracked for t in inputs):
        return
    output.tracked = True
    stack[-1].entries.append(_TapeEntry(inputs=inputs, output=output, backward_fn=backward_fn))


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate .grad on every requires_grad tensor reachable on the tape.

    Gradients accumulate additively for tensors used more than once;
    requires_grad tensors on the tape that do not influence the loss get a
    zero gradient.
    """
    if loss.data.size != 1:
        raise InvalidArgumentError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        out_grad = grads.get(id(entry.output))
        if out_grad is None:
            continue
        input_grads = entry.backward_fn(out_grad)
        for tensor, grad in zip(entry.inputs, input_grads):
            if grad is None or not tensor.tracked:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad
    for entry in tape.entries:
        for tensor in entry.inputs:
            if tensor.requires_grad:
                accumulated = grads.get(id(tensor))
                if accumulated is None:
                    accumulated = np.zeros_like(tensor.data)
                tensor.grad = accumulated.astype(tensor.data.dtype, copy=False)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# forward operations
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        out = Tensor(a.data + b.data)
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        out = Tensor(a.data * b.data)
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >= 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    try:
        out = Tensor(a.data @ b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward_fn(g: np.ndarray):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    _record(out, (a, b), backward_fn)
    return out


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    a = _as_tensor(a)
    perm = tuple(axes) if axes is not None else tuple(reversed(range(a.data.ndim)))
    out = Tensor(np.transpose(a.data, perm))
    inverse = tuple(np.argsort(perm))
    _record(out, (a,), lambda g: (np.transpose(g, inverse),))
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    try:
        out = Tensor(a.data.reshape(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {tuple(shape)}") from None
    _record(out, (a,), lambda g: (g.reshape(a.shape),))
    return out


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(_as_tensor(t) for t in tensors)
    if not parts:
        raise InvalidArgumentError("concat needs at least one tensor")
    try:
        out = Tensor(np.concatenate([t.data for t in parts], axis=axis))
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes " + ", ".join(str(t.shape) for t in parts)
        ) from None
    sizes = [t.data.shape[axis] for t in parts]
    splits = np.cumsum(sizes)[:-1]
    _record(out, parts, lambda g: tuple(np.split(g, splits, axis=axis)))
    return out


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Select rows (axis 0) by index; duplicates accumulate in the gradient."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"row index out of range for shape {a.shape}")
    out = Tensor(a.data[idx])

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        return (grad,)

    _record(out, (a,), backward_fn)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice [start, stop) along axis 0."""
    a = _as_tensor(a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise IndexError(f"slice [{start}, {stop}) out of range for shape {a.shape}")
    out = Tensor(a.data[start:stop])

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(a.data)
        grad[start:stop] = g
        return (grad,)

    _record(out, (a,), backward_fn)
    return out


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit x * Phi(x)."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = Tensor(x * cdf)

    def backward_fn(g: np.ndarray):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    _record(out, (a,), backward_fn)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise InvalidArgumentError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward_fn(g: np.ndarray):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    _record(out, (a,), backward_fn)
    return out


def layer_norm(a: Tensor, axis: int = -1, eps: float = 1e-6) -> Tensor:
    """Normalize to zero mean / unit variance along one axis (no affine)."""
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise InvalidArgumentError(f"layer_norm axis {axis} invalid for shape {a.shape}")
    mean = a.data.mean(axis=axis, keepdims=True)
    centered = a.data - mean
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = centered * inv_std
    out = Tensor(y)

    def backward_fn(g: np.ndarray):
        g_mean = g.mean(axis=axis, keepdims=True)
        gy_mean = (g * y).mean(axis=axis, keepdims=True)
        return (inv_std * (g - g_mean - y * gy_mean),)

    _record(out, (a,), backward_fn)
    return out


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.mean(axis=axis))
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward_fn(g: np.ndarray):
        if axis is None:
            return (np.full_like(a.data, 1.0 / count) * g,)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy() / count,)

    _record(out, (a,), backward_fn)
    return out


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes disagree, {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor(np.mean(diff * diff))
    scale = 2.0 / diff.size

    def backward_fn(g: np.ndarray):
        base = scale * diff * g
        return base, -base

    _record(out, (pred, target), backward_fn)
    return out


def cross_entropy_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under row-wise softmax.

    Combines log-softmax and NLL in one max-shifted step, so adding a constant
    to a row of logits leaves the loss unchanged.
    """
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy_loss expects (batch, classes), got {logits.shape}")
    y = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if y.shape != (n,):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {n}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InvalidArgumentError(f"labels must lie in [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    out = Tensor(-log_probs[np.arange(n), y].mean())

    def backward_fn(g: np.ndarray):
        probs = np.exp(log_probs)
        probs[np.arange(n), y] -= 1.0
        return (probs * (g / n),)

    _record(out, (logits,), backward_fn)
    return out


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


@dataclass
class AdamWState:
    """Moment accumulators and hyperparameters for decoupled-weight-decay Adam."""

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamWState
) -> None:
    """One AdamW update in place: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {name} {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data, dtype=np.float64)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data, dtype=np.float64)
        v = state.v[name]
        g64 = g.astype(np.float64, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g64
        v *= state.beta2
        v += (1.0 - state.beta2) * g64 * g64
        m_hat = m / bc1
        v_hat = v / bc2
        update = m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p.data
        p.data = (p.data - state.lr * update).astype(p.data.dtype, copy=False)


def lr_schedule(base_lr: float, epoch: int, total_epochs: int, warmup_epochs: int) -> float:
    """Linear warmup from 0 to base_lr, then cosine decay to 0 at total_epochs."""
    if not 0 <= epoch < total_epochs:
        raise InvalidArgumentError(f"epoch {epoch} outside [0, {total_epochs})")
    if warmup_epochs >= total_epochs:
        raise InvalidArgumentError("warmup must be shorter than the total schedule")
    if warmup_epochs > 0 and epoch <= warmup_epochs:
        return base_lr * epoch / warmup_epochs
    progress = (epoch - warmup_epochs) / (total_epochs - warmup_epochs)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between taped gradients and central finite differences.

    Relative error per element is |analytic - numeric| divided by
    max(1e-12, |analytic| + |numeric|). Inputs should be float64 for the
    default step size to be meaningful.
    """
    if h <= 0:
        raise InvalidArgumentError(f"step size must be positive, got {h}")
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        loss = fn(*inputs)
    backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    for tensor, grad in zip(inputs, analytic):
        flat = tensor.data.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            f_plus = float(fn(*inputs).data)
            flat[i] = original - h
            f_minus = float(fn(*inputs).data)
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            ana = float(grad_flat[i])
            err = abs(ana - numeric) / max(1e-12, abs(ana) + abs(numeric))
            if err > worst:
                worst = err
    return worst
