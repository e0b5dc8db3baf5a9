"""Dense reverse-mode autodiff tensor."""

from __future__ import annotations

import contextlib

import numpy as np

_state = {"dtype": np.float32, "check_finite": True, "grad_enabled": True, "branches": None}


class NonFiniteError(FloatingPointError):
    pass


def set_default_dtype(dtype) -> None:
    _state["dtype"] = np.dtype(dtype).type


def get_default_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def default_dtype(dtype):
    prev = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = prev


@contextlib.contextmanager
def no_grad():
    prev = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = prev


@contextlib.contextmanager
def record_branches():
    """Collect the branch choices (ReLU signs, max-pool winners) made by forward ops.

    Two evaluations with equal records lie on the same smooth piece.
    """
    prev = _state["branches"]
    log = _state["branches"] = []
    try:
        yield log
    finally:
        _state["branches"] = prev


def note_branch(choice: np.ndarray) -> None:
    if _state["branches"] is not None:
        _state["branches"].append(np.packbits(choice).tobytes() if choice.dtype == bool
                                  else choice.tobytes())


def set_check_finite(flag: bool) -> None:
    _state["check_finite"] = bool(flag)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "tag", "_parents", "_backward",
                 "_op", "_spent")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _state["dtype"])
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.tag = None
        self._parents = ()
        self._backward = None
        self._op = ""
        self._spent = False

    @classmethod
    def _make(cls, data: np.ndarray, parents: tuple, op: str, backward) -> "Tensor":
        """Create an op output and register its backward rule."""
        if _state["check_finite"] and not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite values produced by {op}")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = ""
        out.tag = None
        out._op = op
        out._spent = False
        track = _state["grad_enabled"] and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        return out

    # -- basics ---------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- backward -------------------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.shape}")
        if self._spent:
            raise RuntimeError("backward called twice on the same graph; rebuild the forward pass")
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node._spent = True
                if node is not self:
                    node.grad = None  # intermediate grads are not kept
            node._backward = None
            node._parents = ()
        self._spent = True

    # -- elementwise ----------------------------------------------------------
    def __add__(self, other):
        other = _lift(other, self)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(unbroadcast(g, b.shape))
        return Tensor._make(a.data + b.data, (a, b), "add", bw)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bw(g):
            a._accumulate(-g)
        return Tensor._make(-a.data, (a,), "neg", bw)

    def __sub__(self, other):
        return self + (-_lift(other, self))

    def __rsub__(self, other):
        return _lift(other, self) + (-self)

    def __mul__(self, other):
        other = _lift(other, self)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(unbroadcast(g * a.data, b.shape))
        return Tensor._make(a.data * b.data, (a, b), "mul", bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other, self)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        return Tensor._make(a.data / b.data, (a, b), "div", bw)

    def __rtruediv__(self, other):
        return _lift(other, self) / self

    def __pow__(self, p: float):
        a = self

        def bw(g):
            a._accumulate(g * p * a.data ** (p - 1))
        return Tensor._make(a.data ** p, (a,), "pow", bw)

    def __matmul__(self, other):
        from uareg.autodiff.ops import matmul
        return matmul(self, _lift(other, self))

    # -- reductions and shape -------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))
        return Tensor._make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), "sum", bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self

        def bw(g):
            a._accumulate(g.reshape(a.shape))
        return Tensor._make(a.data.reshape(shape), (a,), "reshape", bw)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        a = self

        def bw(g):
            a._accumulate(g.transpose(inv))
        return Tensor._make(a.data.transpose(axes), (a,), "transpose", bw)

    def flatten(self, start: int = 1):
        return self.reshape(self.shape[:start] + (-1,))


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype), dtype=like.data.dtype)


def tensor(data, requires_grad: bool = False, dtype=None, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)
