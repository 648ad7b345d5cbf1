"""Minimal reverse-mode autodiff over numpy float64 arrays.

Every primitive defines its forward value and an exact backward rule that
accumulates (+=) into its parents' gradient buffers. Graphs are acyclic
and confined to one thread from forward through backward.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}{tag})"

    def _accumulate(self, grad):
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad.reshape(self.data.shape)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("implicit backward needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64).reshape(self.data.shape)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.data.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- arithmetic -----------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data + b.data, parents=(a, b), backward=lambda g: ((a, g), (b, g)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        parents=(a, b),
        backward=lambda g: ((a, g * b.data), (b, g * a.data)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data / b.data,
        parents=(a, b),
        backward=lambda g: ((a, g / b.data), (b, -g * a.data / b.data**2)),
    )


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    return Tensor(
        a.data**p, parents=(a,), backward=lambda g: ((a, g * p * a.data ** (p - 1)),)
    )


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor(out, parents=(a,), backward=lambda g: ((a, g * 0.5 / out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, parents=(a,), backward=lambda g: ((a, g * out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), parents=(a,), backward=lambda g: ((a, g / a.data),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (a, _unbroadcast(ga, a.data.shape)), (b, _unbroadcast(gb, b.data.shape))

    return Tensor(np.matmul(a.data, b.data), parents=(a, b), backward=backward)


# -- shape ops ------------------------------------------------------------
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(
        a.data.reshape(shape),
        parents=(a,),
        backward=lambda g: ((a, g.reshape(a.data.shape)),),
    )


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return Tensor(
        a.data.transpose(axes),
        parents=(a,),
        backward=lambda g: ((a, g.transpose(inverse)),),
    )


def getitem(a, key) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return ((a, out),)

    return Tensor(a.data[key], parents=(a,), backward=backward)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather rows along ``axis`` (differentiable w.r.t. the source)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)

    def backward(g):
        out = np.zeros_like(a.data)
        sl = [slice(None)] * a.ndim
        sl[axis] = indices
        np.add.at(out, tuple(sl), g)
        return ((a, out),)

    return Tensor(np.take(a.data, indices, axis=axis), parents=(a,), backward=backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(zip(tensors, pieces))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors), backward=backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        pieces = np.split(g, len(tensors), axis=axis)
        return tuple((t, p.squeeze(axis)) for t, p in zip(tensors, pieces))

    return Tensor(np.stack([t.data for t in tensors], axis=axis), parents=tuple(tensors), backward=backward)


def roll(a, shift, axis) -> Tensor:
    """Cyclic shift (used by the shifted-window protocol)."""
    a = as_tensor(a)
    neg = tuple(-s for s in shift) if isinstance(shift, tuple) else -shift
    return Tensor(
        np.roll(a.data, shift, axis=axis),
        parents=(a,),
        backward=lambda g: ((a, np.roll(g, neg, axis=axis)),),
    )


def pad2d(a, pad_h: int, pad_w: int) -> Tensor:
    """Zero-pad the two spatial axes of a (B, H, W, C) tensor."""
    a = as_tensor(a)
    widths = ((0, 0), (pad_h, pad_h), (pad_w, pad_w), (0, 0))

    def backward(g):
        h, w = a.data.shape[1], a.data.shape[2]
        return ((a, g[:, pad_h : pad_h + h, pad_w : pad_w + w, :]),)

    return Tensor(np.pad(a.data, widths), parents=(a,), backward=backward)


# -- reductions -----------------------------------------------------------
def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape)),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g_exp, a.data.shape)),)

    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,), backward=backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(sum_(a, axis, keepdims), 1.0 / count)


def std(a, axis=None, keepdims=False, eps: float = 1e-12) -> Tensor:
    """Population standard deviation (composed, hence differentiable)."""
    a = as_tensor(a)
    mu = mean(a, axis, keepdims=True)
    var = mean(power(add(a, mul(mu, -1.0)), 2.0), axis, keepdims)
    return sqrt(add(var, eps))


# -- nonlinearities -------------------------------------------------------
def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, parents=(a,), backward=lambda g: ((a, g * out * (1.0 - out)),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, parents=(a,), backward=lambda g: ((a, g * (1.0 - out**2)),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(
        np.maximum(a.data, 0.0), parents=(a,), backward=lambda g: ((a, g * (a.data > 0)),)
    )


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return Tensor(a.data * factor, parents=(a,), backward=lambda g: ((a, g * factor),))


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    neg = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    out = np.where(a.data > 0, a.data, neg)
    deriv = np.where(a.data > 0, 1.0, neg + alpha)
    return Tensor(out, parents=(a,), backward=lambda g: ((a, g * deriv),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data > lo) & (a.data < hi)
    return Tensor(
        np.clip(a.data, lo, hi), parents=(a,), backward=lambda g: ((a, g * inside),)
    )


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.data.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((a, out * (g - dot)),)

    return Tensor(out, parents=(a,), backward=backward)


def layer_norm(a, gamma=None, beta=None, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """Normalize to zero mean / unit variance along ``axis``, then affine."""
    a = as_tensor(a)
    mu = mean(a, axis, keepdims=True)
    centered = add(a, mul(mu, -1.0))
    var = mean(power(centered, 2.0), axis, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    if gamma is not None:
        normed = mul(normed, gamma)
    if beta is not None:
        normed = add(normed, beta)
    return normed


# -- sampling -------------------------------------------------------------
def bilinear_sample(feature_map, coords) -> Tensor:
    """Sample an (H, W, C) map at (x, y) positions, edge-clamped.

    ``coords`` has shape (n, 2); both the map and the coordinates receive
    exact gradients of the bilinear interpolant.
    """
    fm = as_tensor(feature_map)
    co = as_tensor(coords)
    h, w, c = fm.data.shape
    px = np.clip(co.data[:, 0], 0.0, w - 1.0)
    py = np.clip(co.data[:, 1], 0.0, h - 1.0)
    inside_x = (co.data[:, 0] > 0.0) & (co.data[:, 0] < w - 1.0)
    inside_y = (co.data[:, 1] > 0.0) & (co.data[:, 1] < h - 1.0)
    x0 = np.clip(np.floor(px).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(int), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = (px - x0)[:, None]
    fy = (py - y0)[:, None]
    flat = fm.data.reshape(h * w, c)
    v00 = flat[y0 * w + x0]
    v01 = flat[y0 * w + x1]
    v10 = flat[y1 * w + x0]
    v11 = flat[y1 * w + x1]
    out = v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) + v10 * (1 - fx) * fy + v11 * fx * fy

    def backward(g):
        grads = []
        if fm.requires_grad:
            gm = np.zeros((h * w, c))
            np.add.at(gm, y0 * w + x0, g * (1 - fx) * (1 - fy))
            np.add.at(gm, y0 * w + x1, g * fx * (1 - fy))
            np.add.at(gm, y1 * w + x0, g * (1 - fx) * fy)
            np.add.at(gm, y1 * w + x1, g * fx * fy)
            grads.append((fm, gm.reshape(h, w, c)))
        if co.requires_grad:
            dx = ((v01 - v00) * (1 - fy) + (v11 - v10) * fy) * g
            dy = ((v10 - v00) * (1 - fx) + (v11 - v01) * fx) * g
            gc = np.stack([dx.sum(axis=1) * inside_x, dy.sum(axis=1) * inside_y], axis=1)
            grads.append((co, gc))
        return tuple(grads)

    return Tensor(out, parents=(fm, co), backward=backward)


def bilinear_shift_batch(x, offsets) -> Tensor:
    """Resample each (h, w, c) slice of ``x`` at grid + its own (dx, dy).

    ``x`` is (B, h, w, c), ``offsets`` is (B, 2); edge clamp. Used by the
    deformable-window attention to move whole windows by learned offsets.
    """
    xt = as_tensor(x)
    off = as_tensor(offsets)
    bsz, h, w, c = xt.data.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    px = xs[None] + off.data[:, 0][:, None, None]
    py = ys[None] + off.data[:, 1][:, None, None]
    inside_x = (px > 0.0) & (px < w - 1.0)
    inside_y = (py > 0.0) & (py < h - 1.0)
    px = np.clip(px, 0.0, w - 1.0)
    py = np.clip(py, 0.0, h - 1.0)
    x0 = np.clip(np.floor(px).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(int), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    bi = np.arange(bsz)[:, None, None]
    v00 = xt.data[bi, y0, x0]
    v01 = xt.data[bi, y0, x1]
    v10 = xt.data[bi, y1, x0]
    v11 = xt.data[bi, y1, x1]
    out = v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) + v10 * (1 - fx) * fy + v11 * fx * fy

    def backward(g):
        grads = []
        if xt.requires_grad:
            gm = np.zeros_like(xt.data)
            np.add.at(gm, (bi, y0, x0), g * (1 - fx) * (1 - fy))
            np.add.at(gm, (bi, y0, x1), g * fx * (1 - fy))
            np.add.at(gm, (bi, y1, x0), g * (1 - fx) * fy)
            np.add.at(gm, (bi, y1, x1), g * fx * fy)
            grads.append((xt, gm))
        if off.requires_grad:
            dx = (((v01 - v00) * (1 - fy) + (v11 - v10) * fy) * g).sum(axis=-1) * inside_x
            dy = (((v10 - v00) * (1 - fx) + (v11 - v01) * fx) * g).sum(axis=-1) * inside_y
            gc = np.stack([dx.sum(axis=(1, 2)), dy.sum(axis=(1, 2))], axis=1)
            grads.append((off, gc))
        return tuple(grads)

    return Tensor(out, parents=(xt, off), backward=backward)
