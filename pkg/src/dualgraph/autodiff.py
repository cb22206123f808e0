"""Minimal reverse-mode autodiff over dense float64 arrays.

Covers exactly the operations the dual-graph classifier needs: matrix
products, elementwise arithmetic, ReLU/sigmoid/log/power, concatenation
and row tiling (for pairwise edge features), reductions, and a
numerically stable binary cross-entropy on a single logit.

Gradients accumulate into ``Tensor.grad``; each ``backward()`` call adds
one full pass worth of gradient, so calling it twice without zeroing
doubles every gradient. No operation mutates its inputs.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

Vjp = Callable[[np.ndarray], tuple]


class Tensor:
    """Dense float64 array with an optional place on the backward tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._vjp: Optional[Vjp] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate dself/dparam into ``grad`` for every reachable tensor.

        Requires a scalar (shape ``()``) tensor on the tape. Gradients from
        repeated calls add up; zero them between steps.
        """
        if self.data.shape != ():
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            raise ValueError("backward on a tensor that does not require grad")

        order = _topo_order(self)
        flows = {id(self): np.ones((), dtype=np.float64)}
        for node in reversed(order):
            flow = flows.pop(id(node), None)
            if flow is None:
                continue
            node.grad = flow if node.grad is None else node.grad + flow
            if node._vjp is None:
                continue
            for parent, pgrad in zip(node._parents, node._vjp(flow)):
                if pgrad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in flows:
                    flows[key] = flows[key] + pgrad
                else:
                    flows[key] = pgrad

    # Operator sugar; elementwise ops require matching shapes except for
    # the row-bias case handled in add().
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _topo_order(root: Tensor) -> list:
    """Iterative DFS topological order of the requires_grad subgraph."""
    order: list = []
    visited: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp: Vjp) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also supports adding a length-n bias row to (m, n)."""
    if a.data.shape == b.data.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g))
    if a.data.ndim == 2 and b.data.shape == (a.data.shape[1],):
        return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ValueError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub: incompatible shapes {a.data.shape} and {b.data.shape}")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, s: float) -> Tensor:
    return _make(a.data * s, (a,), lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}"
        )
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def logistic(x: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-x)), stable for large |x|."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = logistic(np.atleast_1d(a.data)).reshape(a.data.shape)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise power for strictly positive inputs (fractional exponents)."""
    ad = a.data
    out = ad**exponent
    return _make(out, (a,), lambda g: (g * exponent * ad ** (exponent - 1.0),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _make(
        np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, g, dtype=np.float64),)
    )


def mean_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    n = a.data.size
    return _make(
        np.asarray(a.data.mean()),
        (a,),
        lambda g: (np.full(shape, g / n, dtype=np.float64),),
    )


def row_sum(a: Tensor) -> Tensor:
    """Sum each row of an (m, n) matrix into an (m, 1) column."""
    if a.data.ndim != 2:
        raise ValueError(f"row_sum expects a matrix, got shape {a.data.shape}")
    n = a.data.shape[1]
    return _make(
        a.data.sum(axis=1, keepdims=True),
        (a,),
        lambda g: (np.repeat(g, n, axis=1),),
    )


def reshape(a: Tensor, shape: tuple) -> Tensor:
    old = a.data.shape
    return _make(a.data.reshape(shape).copy(), (a,), lambda g: (g.reshape(old),))


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    if a.data.ndim != b.data.ndim:
        raise ValueError(
            f"concat: rank mismatch between {a.data.shape} and {b.data.shape}"
        )
    other = 1 - axis
    if a.data.ndim == 2 and a.data.shape[other] != b.data.shape[other]:
        raise ValueError(
            f"concat: incompatible shapes {a.data.shape} and {b.data.shape} "
            f"along axis {axis}"
        )
    split = a.data.shape[axis]

    def vjp(g: np.ndarray) -> tuple:
        ga, gb = np.split(g, [split], axis=axis)
        return ga, gb

    return _make(np.concatenate([a.data, b.data], axis=axis), (a, b), vjp)


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Repeat each row k times consecutively: (m, n) -> (m*k, n)."""
    m, n = a.data.shape
    return _make(
        np.repeat(a.data, k, axis=0),
        (a,),
        lambda g: (g.reshape(m, k, n).sum(axis=1),),
    )


def tile_rows(a: Tensor, k: int) -> Tensor:
    """Stack k full copies of the matrix: (m, n) -> (k*m, n)."""
    m, n = a.data.shape
    return _make(
        np.tile(a.data, (k, 1)),
        (a,),
        lambda g: (g.reshape(k, m, n).sum(axis=0),),
    )


def bce_with_logits(logit: Tensor, label) -> Tensor:
    """Binary cross-entropy -[y log s(z) + (1-y) log(1-s(z))], stable form.

    Computed as max(z, 0) - z*y + log1p(exp(-|z|)) so large-magnitude
    logits neither overflow nor lose the tiny-loss tail.
    """
    if logit.data.size != 1:
        raise ValueError(f"bce_with_logits expects a scalar logit, got {logit.shape}")
    y = float(label)
    if y not in (0.0, 1.0):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    z = float(logit.data.reshape(()))
    loss = max(z, 0.0) - z * y + np.log1p(np.exp(-abs(z)))
    in_shape = logit.data.shape
    residual = logistic(np.asarray([z]))[0] - y

    def vjp(g: np.ndarray) -> tuple:
        return (np.full(in_shape, g * residual, dtype=np.float64),)

    return _make(np.asarray(loss), (logit,), vjp)
