"""Reverse-mode automatic differentiation on numpy arrays.

A small tape engine covering exactly the operations the exploration stack
needs: dense layers, pointwise nonlinearities, reductions, and the glue for
squashed-Gaussian log-probabilities. Backward passes accumulate into
``Tensor.grad``; :class:`Adam` consumes those gradients.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Tensor", "Mlp", "Adam", "affine", "concat", "minimum"]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
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
    """One node of the computation tape wrapping a single ndarray."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data)
            if data.dtype.kind != "f":
                data = data.astype(np.float64)
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _acc(self, grad: np.ndarray, owned: bool) -> None:
        # `owned` means the caller built `grad` for this tensor alone, so it
        # is safe to keep without copying and to add into later.
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = grad if owned else grad.copy()
        else:
            self.grad += grad

    def backward(self) -> None:
        """Backpropagate from this scalar through the tape."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar root")
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
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            out = _node(self.data + other.data, (self, other))
            if out.requires_grad:
                def backward(g, a=self, b=other):
                    ga = _unbroadcast(g, a.data.shape)
                    a._acc(ga, owned=ga is not g)
                    gb = _unbroadcast(g, b.data.shape)
                    b._acc(gb, owned=gb is not g)
                out._backward = backward
            return out
        out = _node(self.data + other, (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self: a._acc(g, owned=False)
        return out

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            out = _node(self.data - other.data, (self, other))
            if out.requires_grad:
                def backward(g, a=self, b=other):
                    ga = _unbroadcast(g, a.data.shape)
                    a._acc(ga, owned=ga is not g)
                    b._acc(-_unbroadcast(g, b.data.shape), owned=True)
                out._backward = backward
            return out
        out = _node(self.data - other, (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self: a._acc(g, owned=False)
        return out

    def __rsub__(self, other) -> "Tensor":
        out = _node(other - self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self: a._acc(-g, owned=True)
        return out

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            out = _node(self.data * other.data, (self, other))
            if out.requires_grad:
                def backward(g, a=self, b=other):
                    a._acc(_unbroadcast(g * b.data, a.data.shape), owned=True)
                    b._acc(_unbroadcast(g * a.data, b.data.shape), owned=True)
                out._backward = backward
            return out
        out = _node(self.data * other, (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self, s=other: a._acc(g * s, owned=True)
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        out = _node(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self: a._acc(-g, owned=True)
        return out

    # -- pointwise ----------------------------------------------------------

    def relu(self) -> "Tensor":
        out = _node(np.maximum(self.data, 0.0), (self,))
        if out.requires_grad:
            # mutating g is safe: a node's grad is never read again after
            # its backward fires, and owned grads have no other holder
            def backward(g, a=self, o=out):
                np.multiply(g, o.data > 0.0, out=g)
                a._acc(g, owned=True)
            out._backward = backward
        return out

    def tanh(self) -> "Tensor":
        out = _node(np.tanh(self.data), (self,))
        if out.requires_grad:
            def backward(g, a=self, o=out):
                np.multiply(g, 1.0 - o.data * o.data, out=g)
                a._acc(g, owned=True)
            out._backward = backward
        return out

    def exp(self) -> "Tensor":
        out = _node(np.exp(self.data), (self,))
        if out.requires_grad:
            def backward(g, a=self, o=out):
                np.multiply(g, o.data, out=g)
                a._acc(g, owned=True)
            out._backward = backward
        return out

    def log(self) -> "Tensor":
        out = _node(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self: a._acc(g / a.data, owned=True)
        return out

    def square(self) -> "Tensor":
        out = _node(self.data * self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g, a=self: a._acc(g * (2.0 * a.data), owned=True)
        return out

    def clip(self, lo: float, hi: float) -> "Tensor":
        out = _node(np.clip(self.data, lo, hi), (self,))
        if out.requires_grad:
            def backward(g, a=self):
                a._acc(g * ((a.data > lo) & (a.data < hi)), owned=True)
            out._backward = backward
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def backward(g, a=self):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                a._acc(np.broadcast_to(g, a.data.shape), owned=False)
            out._backward = backward
        return out

    def mean(self) -> "Tensor":
        out = _node(self.data.mean(), (self,))
        if out.requires_grad:
            def backward(g, a=self):
                a._acc(np.broadcast_to(g / a.data.size, a.data.shape), owned=False)
            out._backward = backward
        return out


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Dense layer x @ weight + bias with gradients for all three inputs."""
    pre = x.data @ weight.data
    pre += bias.data
    out = _node(pre, (x, weight, bias))
    if out.requires_grad:
        def backward(g, x=x, w=weight, b=bias):
            if x.requires_grad:
                x._acc(g @ w.data.T, owned=True)
            if w.requires_grad:
                w._acc(x.data.T @ g, owned=True)
            if b.requires_grad:
                b._acc(g.sum(axis=0), owned=True)
        out._backward = backward
    return out


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    out = _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    if out.requires_grad:
        widths = [p.data.shape[axis] for p in parts]
        def backward(g, parts=parts, widths=widths):
            offset = 0
            for part, width in zip(parts, widths):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + width)
                part._acc(g[tuple(sl)], owned=False)
                offset += width
        out._backward = backward
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    out = _node(np.minimum(a.data, b.data), (a, b))
    if out.requires_grad:
        def backward(g, a=a, b=b):
            mask = a.data <= b.data
            a._acc(g * mask, owned=True)
            b._acc(g * ~mask, owned=True)
        out._backward = backward
    return out


_ACTIVATIONS = {"relu": Tensor.relu, "tanh": Tensor.tanh}


class Mlp:
    """Fully connected network with a linear output layer.

    Weights and biases initialise uniformly in +-1/sqrt(fan_in). With
    ``zero_last`` the output layer starts at exactly zero, which pins the
    initial output of actor and critic heads to the zero vector.
    """

    def __init__(
        self,
        sizes: list[int],
        rng: np.random.Generator,
        activation: str = "relu",
        dtype=np.float64,
        zero_last: bool = False,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = list(sizes)
        self.activation = activation
        self.dtype = np.dtype(dtype)
        self._act = _ACTIVATIONS[activation]
        self._act_np = {"relu": lambda v: np.maximum(v, 0.0), "tanh": np.tanh}[activation]
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        last = len(sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            if zero_last and i == last:
                w[:] = 0.0
                b[:] = 0.0
            self.weights.append(Tensor(w.astype(self.dtype), requires_grad=True))
            self.biases.append(Tensor(b.astype(self.dtype), requires_grad=True))

    def __call__(self, x: Tensor | np.ndarray) -> Tensor:
        """Tape-recording forward pass."""
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = affine(h, w, b)
            if i < n - 1:
                h = self._act(h)
        return h

    def forward_array(self, x: np.ndarray) -> np.ndarray:
        """Forward pass without recording gradients."""
        h = np.asarray(x, dtype=self.dtype)
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < n - 1:
                h = self._act_np(h)
        return h

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def params_vector(self) -> np.ndarray:
        """All parameters flattened into one vector, layer by layer."""
        return np.concatenate([p.data.reshape(-1) for p in self.parameters()])

    def load_params_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=self.dtype)
        offset = 0
        for p in self.parameters():
            n = p.data.size
            if offset + n > vec.size:
                raise ValueError("parameter vector too short")
            p.data[...] = vec[offset:offset + n].reshape(p.data.shape)
            offset += n
        if offset != vec.size:
            raise ValueError("parameter vector too long")

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst.data[...] = src.data

    def polyak_from(self, other: "Mlp", tau: float) -> None:
        """Move parameters a fraction tau of the way toward `other`."""
        for dst, src in zip(self.parameters(), other.parameters()):
            dst.data *= 1.0 - tau
            dst.data += tau * src.data


class Adam:
    """Adam with bias correction. Rejects non-finite gradients atomically."""

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self._scratch = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> bool:
        """Apply one update. Returns False, changing nothing, if any present
        gradient is non-finite; parameters with no gradient are skipped."""
        for p in self.params:
            if p.grad is not None and not np.isfinite(p.grad).all():
                return False
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v, tmp in zip(self.params, self.m, self.v, self._scratch):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=tmp)
            m += tmp
            v *= self.beta2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v += tmp
            # tmp becomes the denominator sqrt(v / c2) + eps
            np.divide(v, c2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            p.data -= tmp
        return True
