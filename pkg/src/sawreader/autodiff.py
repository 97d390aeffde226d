"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every operation returns a Tensor that remembers its parent
tensors and a closure that pushes the output gradient back to them.
``Tensor.backward()`` walks the graph in reverse topological order. Only
the operations this model actually needs are implemented, all in float64.
"""

from __future__ import annotations

import numpy as np

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (cheap forward passes)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable parent."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add g into t.grad, allocating the slot on first touch."""
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _record(out: Tensor, parents: tuple[Tensor, ...], backward) -> Tensor:
    out.requires_grad = True
    out._parents = parents
    out._backward = backward
    return out


def _needs(*tensors: Tensor) -> bool:
    return _GRAD_ENABLED and any(t.requires_grad for t in tensors)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    if not _needs(a, b):
        return out

    def backward():
        if a.requires_grad:
            accumulate(a, out.grad)
        if b.requires_grad:
            accumulate(b, out.grad)

    return _record(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data)
    if not _needs(a, b):
        return out

    def backward():
        if a.requires_grad:
            accumulate(a, out.grad)
        if b.requires_grad:
            accumulate(b, -out.grad)

    return _record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    if not _needs(a, b):
        return out

    def backward():
        if a.requires_grad:
            accumulate(a, out.grad * b.data)
        if b.requires_grad:
            accumulate(b, out.grad * a.data)

    return _record(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    if not _needs(a):
        return out

    def backward():
        accumulate(a, -out.grad)

    return _record(out, (a,), backward)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    if not _needs(a):
        return out

    def backward():
        accumulate(a, out.grad * c)

    return _record(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(n,m) @ (m,k) -> (n,k), or (n,m) @ (m,) -> (n,)."""
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ValueError(f"matmul: unsupported ranks {a.ndim} @ {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dim mismatch {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if not _needs(a, b):
        return out

    if b.ndim == 2:

        def backward():
            if a.requires_grad:
                accumulate(a, out.grad @ b.data.T)
            if b.requires_grad:
                accumulate(b, a.data.T @ out.grad)

    else:

        def backward():
            if a.requires_grad:
                accumulate(a, np.outer(out.grad, b.data))
            if b.requires_grad:
                accumulate(b, a.data.T @ out.grad)

    return _record(out, (a, b), backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row-wise dense map: (n,d) @ (o,d).T + (o,) -> (n,o)."""
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise ValueError("affine: expected x (n,d), w (o,d), b (o,)")
    if x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ValueError(
            f"affine: shape mismatch x{x.shape}, w{w.shape}, b{b.shape}"
        )
    out = Tensor(x.data @ w.data.T + b.data)
    if not _needs(x, w, b):
        return out

    def backward():
        if x.requires_grad:
            accumulate(x, out.grad @ w.data)
        if w.requires_grad:
            accumulate(w, out.grad.T @ x.data)
        if b.requires_grad:
            accumulate(b, out.grad.sum(axis=0))

    return _record(out, (x, w, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ValueError("transpose: expected a 2-D tensor")
    out = Tensor(a.data.T)
    if not _needs(a):
        return out

    def backward():
        accumulate(a, out.grad.T)

    return _record(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # exp(-|x|) is in (0, 1], so neither branch can overflow
    t = np.exp(-np.abs(a.data))
    out = Tensor(np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t)))
    if not _needs(a):
        return out

    def backward():
        accumulate(a, out.grad * out.data * (1.0 - out.data))

    return _record(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    if not _needs(a):
        return out

    def backward():
        accumulate(a, out.grad * (1.0 - out.data * out.data))

    return _record(out, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Stable softmax along the last axis (1-D vector or 2-D rows).

    Raises on NaN input rather than propagating it.
    """
    if a.ndim not in (1, 2):
        raise ValueError("softmax: expected a 1-D or 2-D tensor")
    if np.isnan(a.data).any():
        raise ValueError("softmax: input contains NaN")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out = Tensor(ex / ex.sum(axis=-1, keepdims=True))
    if not _needs(a):
        return out

    def backward():
        g = out.grad
        y = out.data
        dot = (g * y).sum(axis=-1, keepdims=True)
        accumulate(a, (g - dot) * y)

    return _record(out, (a,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("concat: empty input")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if not _needs(*tensors):
        return out

    sizes = [t.shape[axis] for t in tensors]

    def backward():
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                sl = [slice(None)] * out.grad.ndim
                sl[axis] = slice(offset, offset + size)
                accumulate(t, out.grad[tuple(sl)])
            offset += size

    return _record(out, tuple(tensors), backward)


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a (n, d) matrix."""
    if not tensors:
        raise ValueError("stack_rows: empty input")
    out = Tensor(np.stack([t.data for t in tensors], axis=0))
    if not _needs(*tensors):
        return out

    def backward():
        for i, t in enumerate(tensors):
            if t.requires_grad:
                accumulate(t, out.grad[i])

    return _record(out, tuple(tensors), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if not _needs(a):
        return out

    def backward():
        accumulate(a, out.grad.reshape(a.shape))

    return _record(out, (a,), backward)


def gather_rows(table: Tensor, indices) -> Tensor:
    """Select rows of a 2-D table; duplicate indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.intp)
    if table.ndim != 2 or idx.ndim != 1:
        raise ValueError("gather_rows: expected 2-D table and 1-D indices")
    out = Tensor(table.data[idx])
    if not _needs(table):
        return out

    def backward():
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, out.grad)

    return _record(out, (table,), backward)


def take_row(a: Tensor, i: int) -> Tensor:
    if a.ndim != 2:
        raise ValueError("take_row: expected a 2-D tensor")
    if not 0 <= i < a.shape[0]:
        raise ValueError(f"take_row: row {i} out of range for {a.shape}")
    out = Tensor(a.data[i])
    if not _needs(a):
        return out

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[i] += out.grad

    return _record(out, (a,), backward)


def slice_rows(a: Tensor, i: int, length: int) -> Tensor:
    """Take the first `length` rows of batch item i from a (B,T,D) tensor."""
    if a.ndim != 3:
        raise ValueError("slice_rows: expected a 3-D tensor")
    out = Tensor(a.data[i, :length, :])
    if not _needs(a):
        return out

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[i, :length, :] += out.grad

    return _record(out, (a,), backward)


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 1:
        raise ValueError("slice1d: expected a 1-D tensor")
    out = Tensor(a.data[start:stop])
    if not _needs(a):
        return out

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[start:stop] += out.grad

    return _record(out, (a,), backward)


def pad_stack(mats: list[Tensor]) -> tuple[Tensor, np.ndarray]:
    """Stack 2-D tensors of equal width into (B, T_max, D) with zero padding.

    Returns the stacked tensor and the integer row count of each input.
    """
    if not mats:
        raise ValueError("pad_stack: empty input")
    widths = {m.shape[1] for m in mats}
    if len(widths) != 1 or any(m.ndim != 2 for m in mats):
        raise ValueError("pad_stack: inputs must be 2-D with equal width")
    lengths = np.array([m.shape[0] for m in mats], dtype=np.intp)
    if (lengths == 0).any():
        raise ValueError("pad_stack: inputs must have at least one row")
    t_max = int(lengths.max())
    d = mats[0].shape[1]
    data = np.zeros((len(mats), t_max, d), dtype=np.float64)
    for i, m in enumerate(mats):
        data[i, : lengths[i], :] = m.data
    out = Tensor(data)
    if not _needs(*mats):
        return out, lengths

    def backward():
        for i, m in enumerate(mats):
            if m.requires_grad:
                accumulate(m, out.grad[i, : lengths[i], :])

    return _record(out, tuple(mats), backward), lengths


def sum_at(p: Tensor, indices) -> Tensor:
    """Scalar sum of selected entries of a 1-D tensor."""
    idx = np.asarray(indices, dtype=np.intp)
    if p.ndim != 1:
        raise ValueError("sum_at: expected a 1-D tensor")
    out = Tensor(p.data[idx].sum())
    if not _needs(p):
        return out

    def backward():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        np.add.at(p.grad, idx, out.grad)

    return _record(out, (p,), backward)


def log_floored(x: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)) on a scalar; gradient is zero below the floor."""
    if x.data.size != 1:
        raise ValueError("log_floored: expected a scalar")
    val = float(x.data)
    out = Tensor(np.log(max(val, floor)))
    if not _needs(x):
        return out

    def backward():
        if val >= floor:
            accumulate(x, out.grad / val)

    return _record(out, (x,), backward)


def mean_of(scalars: list[Tensor]) -> Tensor:
    if not scalars:
        raise ValueError("mean_of: empty input")
    out = Tensor(sum(float(s.data) for s in scalars) / len(scalars))
    if not _needs(*scalars):
        return out

    inv = 1.0 / len(scalars)

    def backward():
        for s in scalars:
            if s.requires_grad:
                accumulate(s, out.grad * inv)

    return _record(out, tuple(scalars), backward)
