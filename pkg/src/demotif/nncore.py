"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 array together with the closure that
propagates its gradient to the tensors it was computed from.  Calling
:func:`backward` on a scalar result walks the recorded graph in reverse
topological order.  Layer primitives accept an optional leading batch
axis so that whole minibatches go through one BLAS call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class GradientError(RuntimeError):
    """Raised for invalid graph states (non-finite values, bad shapes, ...)."""


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        self.values = np.asarray(values, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _node(values, parents, backward_fn) -> Tensor:
    return Tensor(values, _parents=tuple(parents), _backward=backward_fn)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.values + b.values, (a, b), None)

    def _bw():
        _accumulate(a, _unbroadcast(out.grad, a.shape))
        _accumulate(b, _unbroadcast(out.grad, b.shape))

    out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.values * b.values, (a, b), None)

    def _bw():
        _accumulate(a, _unbroadcast(out.grad * b.values, a.shape))
        _accumulate(b, _unbroadcast(out.grad * a.values, b.shape))

    out._backward = _bw
    return out


def neg(a: Tensor) -> Tensor:
    out = _node(-a.values, (a,), None)
    out._backward = lambda: _accumulate(a, -out.grad)
    return out


def square(a: Tensor) -> Tensor:
    out = _node(a.values * a.values, (a,), None)
    out._backward = lambda: _accumulate(a, 2.0 * a.values * out.grad)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _node(a.values.sum(), (a,), None)
    out._backward = lambda: _accumulate(a, np.broadcast_to(out.grad, a.shape))
    return out


def mean(a: Tensor) -> Tensor:
    n = a.values.size
    out = _node(a.values.mean(), (a,), None)
    out._backward = lambda: _accumulate(a, np.broadcast_to(out.grad / n, a.shape))
    return out


def take(a: Tensor, index) -> Tensor:
    out = _node(a.values[index], (a,), None)

    def _bw():
        g = np.zeros_like(a.values)
        np.add.at(g, index, out.grad)
        _accumulate(a, g)

    out._backward = _bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _node(s, (a,), None)
    out._backward = lambda: _accumulate(a, out.grad * s * (1.0 - s))
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    out = _node(np.where(mask, a.values, 0.0), (a,), None)
    out._backward = lambda: _accumulate(a, out.grad * mask)
    return out


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted."""
    z = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = _node(p, (a,), None)

    def _bw():
        g = out.grad
        _accumulate(a, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, filters: Tensor, bias: Tensor) -> Tensor:
    """Valid, stride-1 convolution.

    ``x`` is ``[L, C_in]`` or ``[B, L, C_in]``; ``filters`` is
    ``[K, C_in, C_out]``.  ``out[t, o] = bias[o] + sum_{k,c} x[t+k, c] * filters[k, c, o]``.
    """
    K, c_in, c_out = filters.shape
    L = x.shape[-2]
    if K > L:
        raise GradientError(f"filter length {K} exceeds input length {L}")
    if x.shape[-1] != c_in:
        raise GradientError(f"input has {x.shape[-1]} channels, filters expect {c_in}")
    T = L - K + 1
    # windows: [..., T, C_in, K] -> [..., T, K, C_in] -> [..., T, K*C_in]
    win = np.swapaxes(sliding_window_view(x.values, K, axis=-2), -1, -2)
    cols = np.ascontiguousarray(win).reshape(*x.shape[:-2], T, K * c_in)
    w2 = filters.values.reshape(K * c_in, c_out)
    out = _node(cols @ w2 + bias.values, (x, filters, bias), None)

    def _bw():
        g = out.grad
        g2 = g.reshape(-1, c_out)
        if filters.requires_grad:
            _accumulate(filters, (cols.reshape(-1, K * c_in).T @ g2).reshape(K, c_in, c_out))
        if bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g @ w2.T).reshape(*g.shape[:-1], K, c_in)
            gx = np.zeros_like(x.values)
            for k in range(K):
                gx[..., k:k + T, :] += gcols[..., k, :]
            _accumulate(x, gx)

    out._backward = _bw
    return out


def max_pool1d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping max-pool over the time axis (``-2``).

    A trailing odd element is passed through; ties go to the first index.
    """
    if window not in (1, 2):
        raise GradientError(f"pool window must be 1 or 2, got {window}")
    if window == 1:
        return x
    L, C = x.shape[-2:]
    n_out = -(-L // 2)
    v = x.values
    if L % 2:
        pad = np.full(v.shape[:-2] + (1, C), -np.inf)
        v = np.concatenate([v, pad], axis=-2)
    v = v.reshape(*v.shape[:-2], n_out, 2, C)
    arg = v.argmax(axis=-2)  # first index on ties
    vals = np.take_along_axis(v, arg[..., None, :], axis=-2)[..., 0, :]
    out = _node(vals, (x,), None)

    def _bw():
        g = np.zeros(v.shape)
        np.put_along_axis(g, arg[..., None, :], out.grad[..., None, :], axis=-2)
        g = g.reshape(*g.shape[:-3], 2 * n_out, C)[..., :L, :]
        _accumulate(x, g)

    out._backward = _bw
    return out


def global_max_pool(x: Tensor) -> Tensor:
    """Max over the time axis: ``[..., L, C] -> [..., C]``; first argmax wins."""
    if x.shape[-2] < 1:
        raise GradientError("global_max_pool needs at least one time step")
    arg = x.values.argmax(axis=-2)
    vals = np.take_along_axis(x.values, arg[..., None, :], axis=-2)[..., 0, :]
    out = _node(vals, (x,), None)

    def _bw():
        g = np.zeros_like(x.values)
        np.put_along_axis(g, arg[..., None, :], out.grad[..., None, :], axis=-2)
        _accumulate(x, g)

    out._backward = _bw
    return out


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``W^T x + b`` for ``x`` of shape ``[D_in]`` or ``[B, D_in]``."""
    if x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[-1]:
        raise GradientError(
            f"affine shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    out = _node(x.values @ W.values + b.values, (x, W, b), None)

    def _bw():
        g = out.grad
        if W.requires_grad:
            _accumulate(W, np.outer(x.values, g) if g.ndim == 1 else x.values.T @ g)
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))
        if x.requires_grad:
            _accumulate(x, g @ W.values.T)

    out._backward = _bw
    return out


def highway_layer(x: Tensor, W_H: Tensor, b_H: Tensor, W_T: Tensor, b_T: Tensor) -> Tensor:
    d = x.shape[-1]
    for W in (W_H, W_T):
        if W.shape != (d, d):
            raise GradientError(f"highway transform must be {d}x{d}, got {W.shape}")
    t = sigmoid(affine(x, W_T, b_T))
    h = relu(affine(x, W_H, b_H))
    return t * h + (1.0 - t) * x


def dropout(x: Tensor, rate: float, train: bool, seed: int | np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise GradientError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy of a softmax over the last axis.

    Returns the scalar loss tensor and the probabilities (plain array).
    The backward rule is ``(probs - one_hot(label)) / batch``.
    """
    labels = np.asarray(labels, dtype=int)
    z = logits.values - logits.values.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsum
    probs = np.exp(logp)
    if logits.values.ndim == 1:
        nll = -logp[labels]
        n = 1
    else:
        n = logits.shape[0]
        nll = -logp[np.arange(n), labels].mean()
    out = _node(nll, (logits,), None)

    def _bw():
        onehot = np.zeros_like(probs)
        if probs.ndim == 1:
            onehot[labels] = 1.0
        else:
            onehot[np.arange(n), labels] = 1.0
        _accumulate(logits, out.grad * (probs - onehot) / n)

    out._backward = _bw
    return out, probs


# ---------------------------------------------------------------------------
# backpropagation
# ---------------------------------------------------------------------------

def topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor in ``loss``'s graph that requires it.

    Gradients are zeroed first, so a second call does not double-count.
    """
    if loss.values.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.values).all():
        raise GradientError(f"non-finite loss {loss.values!r}")
    order = topological_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.values) if node.requires_grad else None
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.values)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """In-place Adam update of ``params``; returns the advanced state."""
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise GradientError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if m.shape != p.shape:
            raise GradientError(f"optimizer state shape mismatch for {name}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    tol: float
    skipped_kinks: dict[str, int]

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def grad_check(build: Callable[[dict[str, Tensor]], Tensor], inputs: dict[str, np.ndarray],
               eps: float = 1e-5, tol: float = 1e-4, floor: float = 1e-6,
               skip_kinks: bool = True, names: Iterable[str] | None = None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``build`` maps a dict of leaf tensors to a scalar loss and must be
    deterministic.  Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``.  When ``skip_kinks`` is set, a
    coordinate whose one-sided differences disagree (the perturbation
    crossed a ReLU or max-pool kink) is counted in ``skipped_kinks``
    instead of scored.
    """
    arrays = {k: np.array(v, dtype=DTYPE) for k, v in inputs.items()}
    leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
    loss = build(leaves)
    backward(loss)
    f0 = loss.item()
    check = list(names) if names is not None else list(arrays)

    def f() -> float:
        val = build({k: Tensor(v) for k, v in arrays.items()}).item()
        if not np.isfinite(val):
            raise GradientError("non-finite loss during finite differencing")
        return val

    errors: dict[str, float] = {}
    skipped: dict[str, int] = {}
    for name in check:
        arr = arrays[name]
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(arr)
        worst, n_skip = 0.0, 0
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f()
            flat[i] = orig - eps
            fm = f()
            flat[i] = orig
            numeric = (fp - fm) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if skip_kinks and err > tol:
                # across a kink the analytic value is one of the one-sided
                # slopes, so the slope jump is about twice the discrepancy;
                # a wrong backward rule leaves both slopes in agreement
                jump = abs((fp - f0) - (f0 - fm)) / eps
                if jump >= abs(a - numeric):
                    n_skip += 1
                    continue
            worst = max(worst, err)
        errors[name] = worst
        skipped[name] = n_skip
    return GradCheckReport(errors, tol, skipped)
