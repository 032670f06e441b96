"""Minimal dense reverse-mode automatic differentiation over float64 numpy.

A Tensor wraps an ndarray plus (for op outputs) its parent tensors and a
closure that routes an upstream gradient to them. backward() seeds a scalar
output with 1 and walks the recorded graph once in reverse topological
order. Everything is float64; any NaN/Inf produced by an op raises
NonFiniteValue at that op.

Ops cover what the training objective needs: dense linear algebra,
pointwise nonlinearities, shape plumbing (concat/slice/gather/tile), norms,
distances, and softmax cross-entropy. A central-difference checker
(grad_check / grad_check_params) is the independent oracle for all of them.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .errors import (
    LabelOutOfRange,
    NonFiniteValue,
    NormalizationDegenerate,
    ShapeMismatch,
)
from .numerics import LOG_FLOOR, NORM_EPS, relative_error, stable_sigmoid, stable_softplus


class Tensor:
    """A float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- gradient plumbing -------------------------------------------------

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Reverse-mode pass from a scalar output; visits each node once."""
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emit = stack.pop()
            if emit:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise_mul(self, other)
        return scalar_mul(float(other), self)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scalar_mul(-1.0, self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue("op produced NaN or Inf")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to its operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# --- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from exc

    def backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}") from exc

    def backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(-_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def scalar_mul(c: float, t) -> Tensor:
    t = as_tensor(t)
    c = float(c)

    def backward(g):
        t.accumulate(c * g)

    return _make(c * t.data, (t,), backward)


def elementwise_mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"elementwise_mul: {a.shape} vs {b.shape}") from exc

    def backward(g):
        a.accumulate(_unbroadcast(g * b.data, a.shape))
        b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError as exc:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}") from exc

    def backward(g):
        if a.ndim == 1 and b.ndim == 1:  # dot product, g scalar
            a.accumulate(g * b.data)
            b.accumulate(g * a.data)
        elif a.ndim == 2 and b.ndim == 2:
            a.accumulate(g @ b.data.T)
            b.accumulate(a.data.T @ g)
        elif a.ndim == 1:  # (k,) @ (k, m) -> (m,)
            a.accumulate(b.data @ g)
            b.accumulate(np.outer(a.data, g))
        else:  # (n, k) @ (k,) -> (n,)
            a.accumulate(np.outer(g, b.data))
            b.accumulate(a.data.T @ g)

    return _make(data, (a, b), backward)


def transpose(t) -> Tensor:
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeMismatch(f"transpose requires a 2-D tensor, got {t.shape}")

    def backward(g):
        t.accumulate(g.T)

    return _make(t.data.T.copy(), (t,), backward)


# --- pointwise ----------------------------------------------------------------


def tanh(t) -> Tensor:
    t = as_tensor(t)
    data = np.tanh(t.data)

    def backward(g):
        t.accumulate(g * (1.0 - data * data))

    return _make(data, (t,), backward)


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    data = stable_sigmoid(t.data)

    def backward(g):
        t.accumulate(g * data * (1.0 - data))

    return _make(data, (t,), backward)


def softplus(t) -> Tensor:
    t = as_tensor(t)
    data = stable_softplus(t.data)

    def backward(g):
        t.accumulate(g * stable_sigmoid(t.data))

    return _make(data, (t,), backward)


def log(t) -> Tensor:
    t = as_tensor(t)
    if np.any(t.data <= 0):
        raise NonFiniteValue("log of a non-positive value")
    data = np.log(t.data)

    def backward(g):
        t.accumulate(g / t.data)

    return _make(data, (t,), backward)


def safe_log(t, floor: float = LOG_FLOOR) -> Tensor:
    """log with the argument clamped at `floor`; clamped entries get zero grad."""
    t = as_tensor(t)
    clamped = np.maximum(t.data, floor)
    data = np.log(clamped)

    def backward(g):
        t.accumulate(np.where(t.data > floor, g / clamped, 0.0))

    return _make(data, (t,), backward)


def exp(t) -> Tensor:
    t = as_tensor(t)
    data = np.exp(t.data)

    def backward(g):
        t.accumulate(g * data)

    return _make(data, (t,), backward)


def leaky_relu(t, slope: float = 0.2) -> Tensor:
    t = as_tensor(t)
    data = np.where(t.data >= 0, t.data, slope * t.data)

    def backward(g):
        t.accumulate(g * np.where(t.data >= 0, 1.0, slope))

    return _make(data, (t,), backward)


def leaky_slopes(t, slope: float = 0.2) -> Tensor:
    """The rectifier's local slope at t, as a constant tensor.

    The slope is piecewise constant in t (derivative zero almost
    everywhere), so the result deliberately carries no tape link; it lets a
    closed-form gradient expression like mask * (w @ ...) stay exact and
    differentiable with respect to the weights.
    """
    t = as_tensor(t)
    return Tensor(np.where(t.data >= 0, 1.0, slope))


# --- shape plumbing -----------------------------------------------------------


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeMismatch("concat of an empty sequence")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {[t.shape for t in ts]} along axis {axis}") from exc
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.accumulate(g[tuple(idx)])

    return _make(data, tuple(ts), backward)


def slice_range(t, start: int, stop: int, axis: int = 0) -> Tensor:
    t = as_tensor(t)
    if axis >= t.ndim:
        raise ShapeMismatch(f"slice axis {axis} out of range for shape {t.shape}")
    idx = [slice(None)] * t.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def backward(g):
        full = np.zeros_like(t.data)
        full[idx] = g
        t.accumulate(full)

    return _make(t.data[idx].copy(), (t,), backward)


def gather_rows(t, indices) -> Tensor:
    """Select rows (2-D) or elements (1-D) by an integer index array."""
    t = as_tensor(t)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeMismatch("gather_rows requires a 1-D index array")
    if t.ndim not in (1, 2):
        raise ShapeMismatch(f"gather_rows requires a 1-D/2-D tensor, got {t.shape}")

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, idx, g)
        t.accumulate(full)

    return _make(t.data[idx].copy(), (t,), backward)


def tile_rows(v, n: int) -> Tensor:
    """Stack a vector as n identical rows; backward sums over rows."""
    v = as_tensor(v)
    if v.ndim != 1:
        raise ShapeMismatch(f"tile_rows requires a vector, got {v.shape}")

    def backward(g):
        v.accumulate(g.sum(axis=0))

    return _make(np.tile(v.data, (n, 1)), (v,), backward)


# --- reductions / norms ---------------------------------------------------------


def reduce_sum(t, axis: int | None = None) -> Tensor:
    t = as_tensor(t)
    data = t.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            t.accumulate(np.broadcast_to(g, t.shape).copy())
        else:
            t.accumulate(np.broadcast_to(np.expand_dims(g, axis), t.shape).copy())

    return _make(np.asarray(data), (t,), backward)


def reduce_mean(t) -> Tensor:
    t = as_tensor(t)
    n = t.data.size
    if n == 0:
        raise ShapeMismatch("reduce_mean of an empty tensor")

    def backward(g):
        t.accumulate(np.full(t.shape, float(g) / n))

    return _make(np.asarray(t.data.mean()), (t,), backward)


def l2_norm(t) -> Tensor:
    """Euclidean norm of a vector, or per-row norms of a matrix.

    At a zero vector the (sub)gradient is taken as 0.
    """
    t = as_tensor(t)
    if t.ndim == 1:
        norm = np.asarray(np.linalg.norm(t.data))

        def backward(g):
            if norm > 0:
                t.accumulate(float(g) * t.data / float(norm))

        return _make(norm, (t,), backward)
    if t.ndim == 2:
        norms = np.linalg.norm(t.data, axis=1)

        def backward(g):
            safe = np.where(norms > 0, norms, 1.0)
            scale = np.where(norms > 0, g / safe, 0.0)
            t.accumulate(scale[:, None] * t.data)

        return _make(norms, (t,), backward)
    raise ShapeMismatch(f"l2_norm requires 1-D or 2-D, got {t.shape}")


def l2_normalize(t) -> Tensor:
    """x / ||x|| per vector (rows of a matrix); degenerate below 1e-12."""
    t = as_tensor(t)
    if t.ndim == 1:
        norm = float(np.linalg.norm(t.data))
        if norm < NORM_EPS:
            raise NormalizationDegenerate(f"vector norm {norm:.3e} below {NORM_EPS}")
        data = t.data / norm

        def backward(g):
            t.accumulate((g - data * np.dot(data, g)) / norm)

        return _make(data, (t,), backward)
    if t.ndim == 2:
        norms = np.linalg.norm(t.data, axis=1)
        if np.any(norms < NORM_EPS):
            raise NormalizationDegenerate("a row norm is below 1e-12")
        data = t.data / norms[:, None]

        def backward(g):
            dots = np.sum(data * g, axis=1, keepdims=True)
            t.accumulate((g - data * dots) / norms[:, None])

        return _make(data, (t,), backward)
    raise ShapeMismatch(f"l2_normalize requires 1-D or 2-D, got {t.shape}")


def squared_euclidean(a, b) -> Tensor:
    """||a-b||^2 for vectors, or per-row for matched matrices."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"squared_euclidean: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    if a.ndim == 1:
        data = np.asarray(np.dot(diff, diff))

        def backward(g):
            a.accumulate(2.0 * float(g) * diff)
            b.accumulate(-2.0 * float(g) * diff)

        return _make(data, (a, b), backward)
    if a.ndim == 2:
        data = np.sum(diff * diff, axis=1)

        def backward(g):
            scaled = 2.0 * g[:, None] * diff
            a.accumulate(scaled)
            b.accumulate(-scaled)

        return _make(data, (a, b), backward)
    raise ShapeMismatch(f"squared_euclidean requires 1-D or 2-D, got {a.shape}")


def pairwise_squared_euclidean(a, b) -> Tensor:
    """All-pairs ||a_i - b_j||^2 as an (n, m) tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"pairwise_squared_euclidean: {a.shape} vs {b.shape}")
    sq_a = np.sum(a.data * a.data, axis=1)
    sq_b = np.sum(b.data * b.data, axis=1)
    data = sq_a[:, None] + sq_b[None, :] - 2.0 * (a.data @ b.data.T)
    np.maximum(data, 0.0, out=data)

    def backward(g):
        a.accumulate(2.0 * (g.sum(axis=1)[:, None] * a.data - g @ b.data))
        b.accumulate(2.0 * (g.sum(axis=0)[:, None] * b.data - g.T @ a.data))

    return _make(data, (a, b), backward)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Sum over rows of logsumexp(logits_i) - logits_i[label_i]."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim == 1:
        logits2 = logits.data[None, :]
        labels = labels.reshape(1)
    elif logits.ndim == 2:
        logits2 = logits.data
    else:
        raise ShapeMismatch(f"softmax_cross_entropy: logits shape {logits.shape}")
    n, n_classes = logits2.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels shape {labels.shape} for {n} rows")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    shifted = logits2 - logits2.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits2.max(axis=1)
    picked = logits2[np.arange(n), labels]
    data = np.asarray((lse - picked).sum())
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    def backward(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        grad *= float(g)
        logits.accumulate(grad if logits.ndim == 2 else grad[0])

    return _make(data, (logits,), backward)


# --- finite-difference checking -------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4) -> float:
    """Max relative error between tape and central-difference gradients of f at x."""
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    if out.data.size != 1:
        raise ShapeMismatch("grad_check requires a scalar-valued function")
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x).item()
        flat[i] = orig - eps
        lo = f(x).item()
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * eps)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise NonFiniteValue("gradient check produced non-finite values")
    return relative_error(analytic, numeric)


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-4,
    rng: np.random.Generator | None = None,
    coords_per_tensor: int | None = None,
) -> float:
    """grad_check over several parameter tensors of a closure loss.

    When coords_per_tensor is given, a seeded random sample of coordinates
    per tensor is checked instead of every entry (the closure is re-evaluated
    twice per coordinate, so full sweeps over large models are expensive).
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    for p in params:
        p.requires_grad = True
        p.zero_grad()
    out = loss_fn()
    if out.data.size != 1:
        raise ShapeMismatch("grad_check_params requires a scalar loss")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if coords_per_tensor is not None and coords_per_tensor < flat.size:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(flat.size, size=coords_per_tensor, replace=False)
        a_flat = analytic.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn().item()
            flat[i] = orig - eps
            lo = loss_fn().item()
            flat[i] = orig
            fd = (hi - lo) / (2.0 * eps)
            worst = max(worst, relative_error(np.asarray(a_flat[i]), np.asarray(fd)))
    return worst
