"""Dense tensors with reverse-mode automatic differentiation.

Storage is a flat numpy array (row-major); supported dtypes are float32 and
float64.  Every differentiable operation records its parents and a backward
closure, so calling :func:`backward` on a scalar loss propagates adjoints
through the recorded graph in reverse topological order.  The traversal order
is fixed by construction, which makes gradient accumulation deterministic.

float64 is the dtype used by all numerical tests (finite differences need the
headroom); float32 is the training default.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an operation's calling contract is violated."""


class ConfigurationError(ValueError):
    """Raised for invalid static configuration (e.g. even conv kernels)."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """Immutable dense array node in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item()) if isinstance(self.data, np.ndarray) else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self.dtype))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Named leaf tensor whose gradient is accumulated by backward passes."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an upstream gradient over axes that were broadcast in the forward."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- element-wise arithmetic ------------------------------------------------

def _ew(a: Tensor, b: Tensor, fwd, grad_a, grad_b) -> Tensor:
    try:
        data = fwd(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"shapes {a.shape} and {b.shape} are not broadcastable") from exc

    def backward(g):
        return (_unbroadcast(grad_a(g, a.data, b.data), a.shape),
                _unbroadcast(grad_b(g, a.data, b.data), b.shape))

    return _node(data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _ew(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _ew(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _ew(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a: Tensor, b: Tensor) -> Tensor:
    return _ew(a, b, np.divide,
               lambda g, x, y: g / y,
               lambda g, x, y: -g * x / (y * y))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul operands must be at least 2-D: {a.shape} x {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _node(data, (a, b), backward)


def pow_const(a: Tensor, p: float) -> Tensor:
    data = a.data ** p
    return _node(data, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return _node(data, (a,), lambda g: (g * data,))


def sqrt(a: Tensor) -> Tensor:
    return pow_const(a, 0.5)


def absolute(a: Tensor) -> Tensor:
    # Subgradient at 0 is 0.
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def cos(a: Tensor) -> Tensor:
    return _node(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def sin(a: Tensor) -> Tensor:
    return _node(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    data = _sigmoid_stable(a.data)
    return _node(data, (a,), lambda g: (g * data * (1.0 - data),))


def silu(a: Tensor) -> Tensor:
    """y = x * sigmoid(x)."""
    s = _sigmoid_stable(a.data)
    data = a.data * s
    return _node(data, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def softplus(a: Tensor) -> Tensor:
    # log(1 + exp(x)), computed stably for large |x|.
    data = np.logaddexp(0.0, a.data)
    s = _sigmoid_stable(a.data)
    return _node(data, (a,), lambda g: (g * s,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp with pass-through gradient inside [lo, hi], zero outside."""
    data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(data, (a,), lambda g: (g * inside,))


# -- reductions and reshaping ----------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, a.shape).astype(a.dtype),)

    return _node(data, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)
    return _node(data, (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    data = np.swapaxes(a.data, ax1, ax2)
    return _node(data, (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, tuple(tensors), backward)


def gather(a: Tensor, indices, axis: int = 0) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        ax = axis % a.data.ndim
        moved = np.moveaxis(ga, ax, 0)
        np.add.at(moved, idx, np.moveaxis(g, ax, 0))
        return (ga,)

    return _node(data, (a,), backward)


def take_along(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Per-slice gather with an index array that must be a permutation along
    ``axis`` for every slice (so the adjoint scatter has no collisions)."""
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take_along_axis(a.data, idx, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, idx, g, axis=axis)
        return (ga,)

    return _node(data, (a,), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    ax = axis % a.data.ndim
    sl = [slice(None)] * a.data.ndim
    sl[ax] = slice(start, start + length)
    data = a.data[tuple(sl)]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[tuple(sl)] = g
        return (ga,)

    return _node(data, (a,), backward)


def pad_axis(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    ax = axis % a.data.ndim
    widths = [(0, 0)] * a.data.ndim
    widths[ax] = (before, after)
    data = np.pad(a.data, widths)
    sl = [slice(None)] * a.data.ndim
    sl[ax] = slice(before, before + a.data.shape[ax])

    def backward(g):
        return (g[tuple(sl)],)

    return _node(data, (a,), backward)


# -- composite layers -------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    mu = tmean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = tmean(xc * xc, axis=-1, keepdims=True)
    inv = pow_const(var + eps, -0.5)
    return xc * inv * gamma + beta


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    # Shift by the (detached) slice maximum; softmax is shift-invariant so the
    # gradient is unaffected.
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = exp(x - shift)
    return e / tsum(e, axis=axis, keepdims=True)


def conv1d(x: Tensor, kernel: Tensor, mode: str = "standard") -> Tensor:
    """Same-length 1D convolution over the second-to-last axis.

    ``x`` has shape (..., T, C).  In ``standard`` mode the kernel is
    (W, C, C_out); in ``depthwise`` mode it is (W, C) with per-channel taps.
    Output length equals T via symmetric zero padding; W must be odd.
    """
    if mode not in ("standard", "depthwise"):
        raise ConfigurationError(f"unknown conv1d mode {mode!r}")
    w = kernel.shape[0]
    if w % 2 == 0:
        raise ConfigurationError(f"conv1d kernel width must be odd, got {w}")
    cin = x.shape[-1]
    if mode == "depthwise":
        if kernel.ndim != 2 or kernel.shape[1] != cin:
            raise DimensionError(
                f"depthwise kernel shape {kernel.shape} does not match {cin} channels")
    else:
        if kernel.ndim != 3 or kernel.shape[1] != cin:
            raise DimensionError(
                f"standard kernel shape {kernel.shape} does not match {cin} input channels")
    t = x.shape[-2]
    half = w // 2
    xp = pad_axis(x, -2, half, half)
    out = None
    for tap in range(w):
        window = narrow(xp, -2, tap, t)
        k_tap = gather(kernel, [tap], axis=0)
        if mode == "depthwise":
            term = window * reshape(k_tap, (cin,))
        else:
            term = matmul(window, reshape(k_tap, (cin, kernel.shape[2])))
        out = term if out is None else out + term
    return out


# -- backward pass ----------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = np.array(pg, copy=True)


# -- finite-difference verification -----------------------------------------

def grad_check(fn: Callable[[], Tensor], params: Iterable[Tensor], h: float = 1e-5,
               rng: np.random.Generator | None = None,
               max_coords: int | None = None) -> float:
    """Compare backward gradients with central differences.

    ``fn`` evaluates the scalar loss from the current values of ``params``.
    Returns the max relative error with denominator max(|analytic|, |numeric|,
    1e-6); the floor keeps central-difference roundoff (~1e-11 absolute at
    h=1e-5) from dominating coordinates whose true gradient is near zero.
    With ``max_coords`` set, a deterministic random subset of
    coordinates per parameter is checked (the analytic side is always the full
    backward pass).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = fn()
    backward(loss)
    analytic = [np.array(p.grad, copy=True) for p in params]

    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                f_plus = fn().item()
                flat[i] = orig - h
                f_minus = fn().item()
                flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = an.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
