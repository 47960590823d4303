"""Dense float64 tensors with reverse-mode automatic differentiation.

Graphs are built eagerly: every op records its parents and a closure
that maps the output gradient to parent gradients. ``Tensor.backward``
walks the recorded graph once in reverse topological order. Leading
dimensions broadcast numpy-style; gradients are summed back to the
parent shape.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

NORM_EPS = 1e-12  # guard added to every norm denominator


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """N-d float64 array plus autodiff bookkeeping.

    Tensors are treated as immutable after creation; the one sanctioned
    exception is the optimizer updating parameter ``data`` in place
    between graph constructions.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericalError("non-finite input to Tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._grad_fn = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, grad_fn) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        else:
            out._parents = ()
            out._grad_fn = None
        return out

    # -- basics ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------

    @staticmethod
    def _wrap(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    def __add__(self, other):
        other = self._wrap(other)
        return Tensor._from_op(
            self.data + other.data, (self, other), lambda g: (g, g)
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = self._wrap(other)
        return Tensor._from_op(
            self.data - other.data, (self, other), lambda g: (g, -g)
        )

    def __rsub__(self, other):
        return self._wrap(other) - self

    def __mul__(self, other):
        other = self._wrap(other)
        a, b = self, other
        return Tensor._from_op(
            a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data)
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)
        a, b = self, other
        out = a.data / b.data
        return Tensor._from_op(
            out, (a, b), lambda g: (g / b.data, -g * a.data / (b.data * b.data))
        )

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents supported")
        out = self.data ** p
        return Tensor._from_op(
            out, (self,), lambda g: (g * p * self.data ** (p - 1),)
        )

    def __matmul__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def grad_fn(g):
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            return ga, gb

        return Tensor._from_op(np.matmul(a.data, b.data), (a, b), grad_fn)

    # -- shape ops ------------------------------------------------------

    def t(self) -> "Tensor":
        """Swap the last two axes."""
        return Tensor._from_op(
            np.swapaxes(self.data, -1, -2),
            (self,),
            lambda g: (np.swapaxes(g, -1, -2),),
        )

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor._from_op(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(old),)
        )

    # -- reductions -----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            if axis is None:
                return (np.broadcast_to(g, self.data.shape).copy(),)
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            return (np.broadcast_to(gg, self.data.shape).copy(),)

        return Tensor._from_op(np.asarray(out), (self,), grad_fn)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis: int, keepdims: bool = False) -> "Tensor":
        out = self.data.max(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            full = out if keepdims else np.expand_dims(out, axis)
            mask = (self.data == full).astype(np.float64)
            mask /= mask.sum(axis=axis, keepdims=True)  # split ties evenly
            gg = g if keepdims else np.expand_dims(g, axis)
            return (mask * gg,)

        return Tensor._from_op(np.asarray(out), (self,), grad_fn)

    # -- elementwise nonlinearities --------------------------------------

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self) -> "Tensor":
        x = self.data
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return Tensor._from_op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out,))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g / (2.0 * out),))

    def relu(self) -> "Tensor":
        out = np.maximum(self.data, 0.0)
        return Tensor._from_op(
            out, (self,), lambda g: (g * (self.data > 0.0),)
        )

    def softmax(self, axis: int = -1) -> "Tensor":
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=axis, keepdims=True)

        def grad_fn(g):
            dot = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - dot),)

        return Tensor._from_op(out, (self,), grad_fn)

    # -- backward ---------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._grad_fn is None:
                continue
            grads = node._grad_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if not parent.requires_grad or g is None:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=np.float64), parent.data.shape)
                parent.grad = g if parent.grad is None else parent.grad + g


def stack(tensors, axis: int = 0) -> Tensor:
    """Stack tensors of identical shape along a new axis."""
    data = np.stack([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._from_op(data, tuple(tensors), grad_fn)


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale slices along `axis` to unit L2 norm, epsilon-guarded at zero."""
    ss = (x * x).sum(axis=axis, keepdims=True)
    return x / (ss + NORM_EPS * NORM_EPS).sqrt()


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def finite_difference(f, params, h: float = 1e-6):
    """Central-difference gradient estimate of scalar f() per parameter.

    Perturbs each coordinate of each parameter in place; restores it
    afterwards. Returns one gradient array per parameter.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            g[i] = fd_coordinate(f, p, i, h)
        grads.append(g.reshape(p.data.shape))
    return grads


def fd_coordinate(f, param: Tensor, index: int, h: float = 1e-6) -> float:
    """Central difference of scalar f() along one flat coordinate of param."""
    flat = param.data.reshape(-1)
    orig = flat[index]
    flat[index] = orig + h
    fp = float(f())
    flat[index] = orig - h
    fm = float(f())
    flat[index] = orig
    if not (np.isfinite(fp) and np.isfinite(fm)):
        raise NumericalError("non-finite function value in finite difference")
    return (fp - fm) / (2.0 * h)


class Adam:
    """Standard Adam with bias correction over a name -> Tensor dict."""

    def __init__(self, params: dict, lr: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise NumericalError(f"non-finite gradient for {name}")
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        zero_grads(self.params.values())
