"""Reverse-mode automatic differentiation over numpy arrays.

A small tape-based engine: every operation returns a new :class:`Tensor` that
remembers its parents and a closure propagating the output gradient back to
them.  ``Tensor.backward()`` walks the graph once in reverse topological order.
All data is float64 and graphs are rebuilt on every forward pass.

The op set is deliberately small: linear maps, elementwise arithmetic,
reductions, concat/slice/reshape, SELU/GELU, square/sqrt, sort-by-key and a
couple of row-indexing helpers.  That is everything the encoders, transport
networks and training losses need.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "as_tensor",
    "cat",
    "sort_by_key",
    "repeat_rows",
    "gather_rows",
    "set_check_finite",
]

# SELU constants from Klambauer et al.; fixed-point of the self-normalizing map.
_SELU_ALPHA = 1.6732632423543772848170429916717
_SELU_LAMBDA = 1.0507009873554804934193349852946

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Opt-in per-op finiteness checking (slow; used by tests and debugging).
_CHECK_FINITE = False


def set_check_finite(flag: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting.

    Returns `grad` itself when no reduction is needed; callers use identity to
    tell whether the result is a fresh array they may hand to `_accum(own=...)`.
    """
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode grads."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        if _CHECK_FINITE and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite value produced")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    # ---- graph construction helpers -----------------------------------------

    @staticmethod
    def _lift(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def _make(self, data, parents, backward) -> "Tensor":
        rg = any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=rg, _parents=parents if rg else (), _backward=backward if rg else None)

    # ---- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        out_data = self.data + other.data

        def backward(go, a=self, b=other):
            if a.requires_grad:
                g = _unbroadcast(go, a.data.shape)
                a._accum(g, own=g is not go)
            if b.requires_grad:
                g = _unbroadcast(go, b.data.shape)
                b._accum(g, own=g is not go)

        return self._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(go, a=self):
            if a.requires_grad:
                a._accum(-go, own=True)

        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        other = self._lift(other)
        out_data = self.data - other.data

        def backward(go, a=self, b=other):
            if a.requires_grad:
                g = _unbroadcast(go, a.data.shape)
                a._accum(g, own=g is not go)
            if b.requires_grad:
                b._accum(_unbroadcast(-go, b.data.shape), own=True)

        return self._make(out_data, (self, other), backward)

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        other = self._lift(other)
        out_data = self.data * other.data

        def backward(go, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(go * b.data, a.data.shape), own=True)
            if b.requires_grad:
                b._accum(_unbroadcast(go * a.data, b.data.shape), own=True)

        return self._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        out_data = self.data / other.data

        def backward(go, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(go / b.data, a.data.shape), own=True)
            if b.requires_grad:
                b._accum(_unbroadcast(-go * a.data / (b.data * b.data), b.data.shape), own=True)

        return self._make(out_data, (self, other), backward)

    def __matmul__(self, other):
        other = self._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul is defined for 2-D tensors only")
        out_data = self.data @ other.data

        def backward(go, a=self, b=other):
            if a.requires_grad:
                a._accum(go @ b.data.T, own=True)
            if b.requires_grad:
                b._accum(a.data.T @ go, own=True)

        return self._make(out_data, (self, other), backward)

    # ---- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(go, a=self, ax=axis, kd=keepdims):
            if not a.requires_grad:
                return
            g = go
            if ax is not None and not kd:
                g = np.expand_dims(g, ax)
            a._accum(np.broadcast_to(g, a.data.shape))

        return self._make(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for ax in axes:
                count *= self.data.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    # ---- elementwise nonlinearities -----------------------------------------

    def square(self):
        def backward(go, a=self):
            if a.requires_grad:
                a._accum(go * (2.0 * a.data), own=True)

        return self._make(self.data * self.data, (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(go, a=self, od=out_data):
            if a.requires_grad:
                a._accum(go * (0.5 / od), own=True)

        return self._make(out_data, (self,), backward)

    def clamp_min(self, lo: float):
        mask = self.data > lo
        out_data = np.where(mask, self.data, lo)

        def backward(go, a=self, m=mask):
            if a.requires_grad:
                a._accum(go * m, own=True)

        return self._make(out_data, (self,), backward)

    def selu(self):
        x = self.data
        pos = x > 0.0
        # exp(min(x, 0)) keeps the exponential bounded for large positive x
        ex = np.exp(np.minimum(x, 0.0))
        out_data = _SELU_LAMBDA * np.where(pos, x, _SELU_ALPHA * (ex - 1.0))

        def backward(go, a=self, p=pos, e=ex):
            if a.requires_grad:
                a._accum(go * (_SELU_LAMBDA * np.where(p, 1.0, _SELU_ALPHA * e)), own=True)

        return self._make(out_data, (self,), backward)

    def gelu(self):
        x = self.data
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out_data = x * cdf

        def backward(go, a=self, c=cdf):
            if a.requires_grad:
                x = a.data
                pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
                a._accum(go * (c + x * pdf), own=True)

        return self._make(out_data, (self,), backward)

    # ---- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def backward(go, a=self):
            if a.requires_grad:
                a._accum(go.reshape(a.data.shape))

        return self._make(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(go, a=self, k=key):
            if a.requires_grad:
                g = np.zeros_like(a.data)
                np.add.at(g, k, go)
                a._accum(g, own=True)

        return self._make(out_data, (self,), backward)

    # ---- backward pass -------------------------------------------------------

    def _accum(self, g: np.ndarray, own: bool = False) -> None:
        """Accumulate an incoming gradient.

        `own=True` promises `g` is a freshly allocated array no one else holds,
        so the first contribution can be stored without copying.  Views and the
        raw output gradient must be passed with `own=False`.
        """
        if self.grad is None:
            if own:
                self.grad = np.asarray(g, dtype=np.float64)
            else:
                self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None


def as_tensor(x, requires_grad: bool = False) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad)


def cat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along an axis; gradient slices back to each input."""
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(go):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * go.ndim
                idx[axis] = slice(lo, hi)
                t._accum(go[tuple(idx)])

    rg = any(t.requires_grad for t in tensors)
    return Tensor(out_data, requires_grad=rg, _parents=tuple(tensors) if rg else (),
                  _backward=backward if rg else None)


def sort_by_key(values: Tensor, keys: Tensor | None = None, axis: int = -1) -> Tensor:
    """Sort `values` along `axis` by `keys` (default: the values themselves).

    The permutation is treated as locally constant: gradients flow through the
    values and never through the keys.
    """
    values = as_tensor(values)
    key_data = values.data if keys is None else as_tensor(keys).data
    if key_data.shape != values.data.shape:
        raise ValueError("keys must have the same shape as values")
    idx = np.argsort(key_data, axis=axis, kind="stable")
    out_data = np.take_along_axis(values.data, idx, axis=axis)

    def backward(go, a=values, ix=idx, ax=axis):
        if a.requires_grad:
            g = np.empty_like(a.data)
            np.put_along_axis(g, ix, go, axis=ax)
            a._accum(g, own=True)

    return values._make(out_data, (values,), backward)


def repeat_rows(t: Tensor, k: int) -> Tensor:
    """(B, ...) -> (B*k, ...) with each row repeated k times consecutively."""
    t = as_tensor(t)
    out_data = np.repeat(t.data, k, axis=0)

    def backward(go, a=t, kk=k):
        if a.requires_grad:
            g = go.reshape((a.data.shape[0], kk) + a.data.shape[1:]).sum(axis=1)
            a._accum(g, own=True)

    return t._make(out_data, (t,), backward)


def gather_rows(t: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup t[idx] for an integer index array; scatter-add on backward."""
    t = as_tensor(t)
    idx = np.asarray(idx)
    out_data = t.data[idx]

    def backward(go, a=t, ix=idx):
        if a.requires_grad:
            g = np.zeros_like(a.data)
            np.add.at(g, ix, go)
            a._accum(g, own=True)

    return t._make(out_data, (t,), backward)
