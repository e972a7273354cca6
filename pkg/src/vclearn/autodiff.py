"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is implicit: every operation records its parent tensors and a
closure that routes the output adjoint back to them. Creation order doubles
as a topological order (a node's inputs always exist before it), so the
backward pass walks reachable nodes by descending creation index and visits
each exactly once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

_node_counter = itertools.count()

# Elementwise op tags accepted by `elementwise`.
ELEMENTWISE_TAGS = ("add", "mul", "relu", "exp", "log", "sigmoid")


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id = next(_node_counter)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint over the axes numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# operations


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data - b.data

    def backward(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g, acc):
        acc(a, _unbroadcast(g * b.data, a.data.shape))
        acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g, acc):
        acc(a, -g)

    return _make(-a.data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.data.shape} x {b.data.shape}"
        )
    data = a.data @ b.data

    def backward(g, acc):
        acc(a, g @ b.data.T)
        acc(b, a.data.T @ g)

    return _make(data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g, acc):
        acc(a, g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g, acc):
        acc(a, g * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log requires strictly positive entries")
    data = np.log(a.data)

    def backward(g, acc):
        acc(a, g / a.data)

    return _make(data, (a,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    data = _sigmoid_np(a.data)

    def backward(g, acc):
        acc(a, g * data * (1.0 - data))

    return _make(data, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    data = np.logaddexp(0.0, a.data)

    def backward(g, acc):
        acc(a, g * _sigmoid_np(a.data))

    return _make(data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise ValueError("sqrt requires non-negative entries")
    data = np.sqrt(a.data)

    def backward(g, acc):
        acc(a, g * (0.5 / data))

    return _make(data, (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g, acc):
        acc(a, g * (2.0 * a.data))

    return _make(a.data * a.data, (a,), backward)


def tensor_sum(a: Tensor, axis=None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g, acc):
        if axis is None:
            acc(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            acc(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _make(data, (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g, acc):
        acc(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _make(a.data.mean(), (a,), backward)


def elementwise(tag: str, *operands: Tensor) -> Tensor:
    """Dispatch a pointwise operation by tag."""
    if tag == "add":
        return add(*operands)
    if tag == "mul":
        return mul(*operands)
    if tag == "relu":
        return relu(*operands)
    if tag == "exp":
        return exp(*operands)
    if tag == "log":
        return log(*operands)
    if tag == "sigmoid":
        return sigmoid(*operands)
    raise ValueError(f"unknown elementwise tag {tag!r}; expected one of {ELEMENTWISE_TAGS}")


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], max-stabilized."""
    labels = np.asarray(labels)
    z = logits.data
    if z.ndim != 2:
        raise ValueError("logits must be 2-d (batch x classes)")
    n, c = z.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} incompatible with batch {n}")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"label out of range [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    nll = lse - shifted[np.arange(n), labels]
    probs = np.exp(shifted - lse[:, None])

    def backward(g, acc):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        acc(logits, d * (g / n))

    return _make(np.float64(nll.mean()), (logits,), backward)


def softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor, params: list[Tensor] | None = None) -> dict[Tensor, Tensor]:
    """Reverse-mode sweep from a scalar loss.

    Returns the gradient map for `params` (default: every requires_grad leaf
    reachable from the loss). Unreachable params get zero gradients. Also
    stores each gradient on the tensor's `.grad` as an ndarray.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")

    # reachable subgraph
    visited: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.node_id in visited:
            continue
        visited[t.node_id] = t
        stack.extend(t._parents)

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones((), dtype=np.float64)}

    def accumulate(t: Tensor, g: np.ndarray):
        if t.node_id in grads:
            grads[t.node_id] = grads[t.node_id] + g
        else:
            grads[t.node_id] = g

    for node_id in sorted(visited, reverse=True):
        node = visited[node_id]
        if node._backward is None or node_id not in grads:
            continue
        node._backward(grads[node_id], accumulate)

    targets = params if params is not None else [
        t for t in visited.values() if t.requires_grad and t._backward is None
    ]
    out: dict[Tensor, Tensor] = {}
    for p in targets:
        g = grads.get(p.node_id)
        if g is None:
            g = np.zeros_like(p.data)
        else:
            g = np.broadcast_to(g, p.data.shape).astype(np.float64, copy=True) \
                if g.shape != p.data.shape else g
        p.grad = g
        out[p] = Tensor(g)
    return out


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Per-parameter first/second moments plus step counter and hyperparameters."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params: list[Tensor], learning_rate: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p.data) for p in params],
        second_moment=[np.zeros_like(p.data) for p in params],
        learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
    )


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState,
              learning_rate: float | None = None) -> AdamState:
    """One bias-corrected Adam update, in place on `params`."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params/grads/moments length mismatch")
    lr = state.learning_rate if learning_rate is None else learning_rate
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.data.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state
