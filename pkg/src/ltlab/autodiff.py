"""Reverse-mode automatic differentiation over dense float64 arrays.

A fresh computation graph is recorded on every forward pass; calling
``backward()`` on a scalar result walks the graph once in reverse topological
order and accumulates gradients into every tensor that requires them.
Everything is float64 so finite-difference verification stays meaningful at
tight tolerances.

Randomness goes through :class:`Rng`, a thin wrapper over numpy's PCG64
bit generator with SeedSequence-derived substreams: the same seed (and
substream key) yields the same draw sequence on every run and platform.

Tensors are plain values and safe to hand between threads; a recorded
graph, however, must be built and backpropagated from a single thread,
and there is no shared mutable global state beyond the grad-enable flag.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special as _special

from .errors import ContractError, DimensionError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (evaluation mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    ``grad`` is present exactly when ``requires_grad`` is true. Op results
    carry closures that push their output gradient into their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        """Backpropagate from a scalar output through the recorded graph."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar output, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward() on a tensor that requires no grad")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        for node in topo:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = None  # allocated lazily during backward()
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.data.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.data.shape)

    return _result(a.data - b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.grad -= g

    return _result(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.data.shape)

    return _result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g / b.data, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)

    return _result(a.data / b.data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    exponent = float(exponent)

    def backward(g):
        if not a.requires_grad:
            return
        if exponent == 0.0:
            return
        if exponent == 1.0:
            a.grad += g
        else:
            a.grad += g * exponent * a.data ** (exponent - 1.0)

    return _result(a.data**exponent, (a,), backward)


def texp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a.grad += g * out_data

    return _result(out_data, (a,), backward)


def tlog(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.grad += g / a.data

    return _result(np.log(a.data), (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.grad += g * (a.data > 0.0)

    return _result(np.maximum(a.data, 0.0), (a,), backward)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU; smooth, so finite-difference checks stay clean."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + _special.erf(a.data * _INV_SQRT2))

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
            a.grad += g * (cdf + a.data * pdf)

    return _result(a.data * cdf, (a,), backward)


def sigmoid(a) -> Tensor:
    """Elementwise logistic function, computed without overflow."""
    a = as_tensor(a)
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        if a.requires_grad:
            a.grad += g * out_data * (1.0 - out_data)

    return _result(out_data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis`` (max subtraction before exponentiation)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * out_data).sum(axis=axis, keepdims=True)
            a.grad += (g - inner) * out_data

    return _result(out_data, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        if a.requires_grad:
            soft = np.exp(out_data)
            a.grad += g - soft * g.sum(axis=axis, keepdims=True)

    return _result(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra / reductions / shape
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul expects operands with ndim >= 2, got {a.shape} @ {b.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.grad += _unbroadcast(ga, a.data.shape)
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.grad += _unbroadcast(gb, b.data.shape)

    return _result(a.data @ b.data, (a, b), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if not a.requires_grad:
            return
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        a.grad += np.broadcast_to(gg, a.data.shape)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in np.atleast_1d(axis)]
    )
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.grad += g.reshape(a.data.shape)

    return _result(a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a.grad += np.transpose(g, inverse)

    return _result(np.transpose(a.data, axes), (a,), backward)


def getitem(a, idx) -> Tensor:
    """Basic (slice/int) indexing; gradients scatter back into place."""
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.grad[idx] += g

    return _result(a.data[idx].copy(), (a,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                t.grad += g[tuple(index)]

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)

    return _result(np.broadcast_to(a.data, shape).copy(), (a,), backward)


# ---------------------------------------------------------------------------
# parameterized building blocks
# ---------------------------------------------------------------------------


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight + bias`` with exact gradients."""
    x, weight = as_tensor(x), _tensor_of(weight)
    if x.data.shape[-1] != weight.data.shape[0]:
        raise DimensionError(
            f"linear: input dim {x.data.shape[-1]} != weight rows {weight.data.shape[0]}"
        )
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, _tensor_of(bias))
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then rescale."""
    x = as_tensor(x)
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    normed = mul(centered, power(add(var, eps), -0.5))
    return add(mul(normed, _tensor_of(gain)), _tensor_of(bias))


def _tensor_of(p) -> Tensor:
    return p.tensor if isinstance(p, Param) else as_tensor(p)


# ---------------------------------------------------------------------------
# parameters and randomness
# ---------------------------------------------------------------------------


@dataclass
class Param:
    """Named model parameter; ``trainable=False`` removes it from optimizer
    updates and from gradient accumulation entirely."""

    tensor: Tensor
    name: str
    trainable: bool = True

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.zero_grad()

    def freeze(self):
        self.trainable = False
        self.tensor.requires_grad = False
        self.tensor.grad = None


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


class Rng:
    """Deterministic random source: numpy PCG64 keyed by (seed, substream path).

    Substreams derived from the same (seed, key) are identical across runs,
    platforms, and worker layouts, which is what makes data generation and
    initialization reproducible bit-for-bit.
    """

    algorithm = "numpy PCG64 via SeedSequence(entropy=seed, spawn_key=key)"

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(_key_part(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.key))
        )

    def substream(self, *parts) -> "Rng":
        return Rng(self.seed, self.key + tuple(_key_part(p) for p in parts))

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        return scale * self._gen.standard_normal(size=shape)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def rademacher(self, shape) -> np.ndarray:
        """±1 draws with equal probability, as float64."""
        return 2.0 * self._gen.integers(0, 2, size=shape).astype(np.float64) - 1.0


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


def grad_check(
    f,
    wrt,
    h: float = 1e-5,
    rel_floor: float = 1e-3,
) -> float:
    """Compare reverse-mode gradients of ``f(*wrt)`` to central differences.

    ``f`` must return a scalar Tensor. Returns the maximum componentwise
    relative error ``|analytic - numeric| / max(rel_floor, |analytic|,
    |numeric|)`` over every element of every tensor in ``wrt``.
    """
    tensors = [wrt] if isinstance(wrt, (Tensor, Param)) else list(wrt)
    tensors = [_tensor_of(t) for t in tensors]
    for t in tensors:
        if not t.requires_grad:
            raise ContractError("grad_check targets must require grad")
        t.zero_grad()
    out = f(*tensors)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = [t.grad.copy() for t in tensors]

    max_rel = 0.0
    for t, ana in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                f_plus = float(f(*tensors).data)
                flat[i] = orig - h
                f_minus = float(f(*tensors).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(rel_floor, abs(ana_flat[i]), abs(numeric))
            max_rel = max(max_rel, abs(ana_flat[i] - numeric) / denom)
    return max_rel
