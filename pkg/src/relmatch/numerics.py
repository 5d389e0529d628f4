"""Dense float64 array kernels with a tape for reverse-mode differentiation.

Values are plain ``numpy`` arrays wrapped in :class:`Var`. Every primitive
executed while a :class:`Tape` is active is appended to that tape together
with a closure computing its vector-Jacobian product. :func:`backward` replays
the tape in reverse and accumulates gradients into :class:`Param` objects.

Arrays may carry leading batch dimensions (matmul follows numpy's stacked
semantics); per-pair code uses plain 2-D matrices.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError, UsageError

ZERO_NORM = 1e-12



class Var:
    __slots__ = ("value", "requires_grad", "tape")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        if self.value.size != 1:
            raise UsageError(f"expected a scalar, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)


class Param(Var):
    """Trainable array with a persistent gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, value, name: str, requires_grad: bool = True):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=requires_grad)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape})"


_state = threading.local()


def _stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def active_tape() -> "Tape | None":
    s = _stack()
    return s[-1] if s else None


class Tape:
    """Ordered record of executed primitives.

    Use as a context manager; tapes are thread-local, so concurrent pipelines
    need one tape each.
    """

    def __init__(self):
        self.records: list[tuple[Var, tuple[Var, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        s = _stack()
        if not s or s[-1] is not self:
            raise UsageError("tapes must be exited in LIFO order")
        s.pop()

    def __len__(self) -> int:
        return len(self.records)


@contextmanager
def no_tape():
    """Suspend recording (values only) inside the block."""
    _stack().append(None)
    try:
        yield
    finally:
        _stack().pop()


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _emit(value: np.ndarray, inputs: tuple[Var, ...], vjp: Callable) -> Var:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError("non-finite value produced")
    out = Var(value, requires_grad=any(v.requires_grad for v in inputs))
    tape = active_tape()
    if tape is not None:
        tape.records.append((out, inputs, vjp))
        out.tape = tape
    return out


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(*shapes) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {' and '.join(map(str, shapes))}") from None


# -- primitives -------------------------------------------------------------

def matmul(a, b) -> Var:
    """Matrix product with numpy stacking over leading dimensions."""
    a, b = as_var(a), as_var(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    _broadcast_shape(a.shape[:-2], b.shape[:-2])
    av, bv = a.value, b.value

    def vjp(g):
        ga = unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape) if b.requires_grad else None
        return ga, gb

    return _emit(av @ bv, (a, b), vjp)


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a.shape, b.shape)

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _emit(a.value + b.value, (a, b), vjp)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a.shape, b.shape)

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _emit(a.value - b.value, (a, b), vjp)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a.shape, b.shape)
    av, bv = a.value, b.value

    def vjp(g):
        return unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)

    return _emit(av * bv, (a, b), vjp)


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a.shape, b.shape)
    av, bv = a.value, b.value
    out = av / bv

    def vjp(g):
        return unbroadcast(g / bv, av.shape), unbroadcast(-g * out / bv, bv.shape)

    return _emit(out, (a, b), vjp)


def scale(a, c: float) -> Var:
    a = as_var(a)
    c = float(c)
    return _emit(a.value * c, (a,), lambda g: (g * c,))


def reshape(a, shape: Sequence[int]) -> Var:
    a = as_var(a)
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {old} to {tuple(shape)}") from None
    return _emit(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes: Sequence[int] | None = None) -> Var:
    a = as_var(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def swap_last(a) -> Var:
    a = as_var(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def sum(a, axis=None, keepdims: bool = False) -> Var:  # noqa: A001
    a = as_var(a)
    shape = a.shape
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(np.asarray(out), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    return tau


def softmax_array(v: np.ndarray, tau: float = 1.0, axis: int = -1) -> np.ndarray:
    """Tape-free tempered softmax of a plain array."""
    tau = _check_tau(tau)
    z = v / tau
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a, tau: float = 1.0, axis: int = -1) -> Var:
    """exp(a/tau) normalised along ``axis`` (max-subtracted)."""
    a = as_var(a)
    y = softmax_array(a.value, tau, axis)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)) / tau,)

    return _emit(y, (a,), vjp)


def log_softmax(a, tau: float = 1.0, axis: int = -1) -> Var:
    a = as_var(a)
    tau = _check_tau(tau)
    z = a.value / tau
    z = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def vjp(g):
        return ((g - p * g.sum(axis=axis, keepdims=True)) / tau,)

    return _emit(out, (a,), vjp)


def cosine(u, v, axis: int = -1) -> Var:
    """Cosine similarity along ``axis`` with broadcasting over other axes.

    Where either norm is <= 1e-12 the result is 0 (1 if both are), and the
    gradient there is 0.
    """
    u, v = as_var(u), as_var(v)
    if u.shape[axis] != v.shape[axis]:
        raise DimensionError(f"cosine length mismatch: {u.shape} vs {v.shape} along axis {axis}")
    _broadcast_shape(u.shape, v.shape)
    uv, vv = u.value, v.value
    nu = np.sqrt((uv * uv).sum(axis=axis, keepdims=True))
    nv = np.sqrt((vv * vv).sum(axis=axis, keepdims=True))
    dot = (uv * vv).sum(axis=axis, keepdims=True)
    ok = (nu > ZERO_NORM) & (nv > ZERO_NORM)
    both = (nu <= ZERO_NORM) & (nv <= ZERO_NORM)
    safe_u = np.where(ok, nu, 1.0)
    safe_v = np.where(ok, nv, 1.0)
    c = np.where(ok, dot / (safe_u * safe_v), np.where(both, 1.0, 0.0))
    out = np.squeeze(c, axis=axis)

    def vjp(g):
        g = np.where(ok, np.expand_dims(g, axis), 0.0)
        gu = gv = None
        if u.requires_grad:
            gu = unbroadcast(g * (vv / (safe_u * safe_v) - c * uv / safe_u**2), uv.shape)
        if v.requires_grad:
            gv = unbroadcast(g * (uv / (safe_u * safe_v) - c * vv / safe_v**2), vv.shape)
        return gu, gv

    return _emit(out, (u, v), vjp)


def detach(a) -> Var:
    """Same value, cut from the gradient graph."""
    return Var(as_var(a).value.copy())


def cosine_array(u, v) -> float:
    """Scalar cosine of two vectors (tape-free), same zero-norm rule."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"cosine length mismatch: {u.shape} vs {v.shape}")
    with no_tape():
        return float(cosine(u, v).value)


# -- reverse pass -----------------------------------------------------------

def backward(tape: Tape, seed: Var) -> None:
    """Accumulate d(seed)/d(param) into ``param.grad`` for every Param reached."""
    if seed.tape is not tape:
        raise UsageError("seed was not produced on this tape")
    if seed.value.size != 1:
        raise UsageError(f"seed must be a scalar, got shape {seed.shape}")
    adj: dict[int, np.ndarray] = {id(seed): np.ones_like(seed.value)}
    params: dict[int, Param] = {}
    for out, inputs, vjp in reversed(tape.records):
        g = adj.pop(id(out), None)
        if g is None or not out.requires_grad:
            continue
        for var, gi in zip(inputs, vjp(g)):
            if gi is None or not var.requires_grad:
                continue
            key = id(var)
            if key in adj:
                adj[key] = adj[key] + gi
            else:
                adj[key] = gi
            if isinstance(var, Param):
                params[key] = var
    for key, p in params.items():
        p.grad = p.grad + adj[key]


# -- finite-difference oracle -----------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    param: str | None
    index: tuple[int, ...] | None
    analytic: float
    numeric: float
    n_coords: int

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= 1e-6


def grad_check(scalar_fn: Callable[[], Var], params: Iterable[Param], eps: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients with central differences, coordinate by coordinate.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 0 < eps <= 1e-2:
        raise ParameterError(f"eps must lie in (0, 1e-2], got {eps}")
    params = list(params)
    saved = [p.grad for p in params]
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = scalar_fn()
    backward(tape, out)
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, saved):
        p.grad = g

    worst = GradCheckReport(0.0, None, None, 0.0, 0.0, 0)
    n = 0
    for p, ga in zip(params, analytic):
        p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_tape():
                flat[i] = orig + eps
                fp = scalar_fn().item()
                flat[i] = orig - eps
                fm = scalar_fn().item()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            a = float(ga.reshape(-1)[i])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            n += 1
            if err > worst.max_rel_error or worst.param is None:
                worst = GradCheckReport(err, p.name, np.unravel_index(i, p.shape), a, num, 0)
    worst.n_coords = n
    return worst
