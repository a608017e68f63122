"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray plus the bookkeeping needed to pull
gradients back through whatever graph produced it.  Every op records its
inputs and a backward closure on the output tensor; a monotone creation
counter doubles as the recording order, so ``Tape`` can replay the exact
sequence in reverse without a separate global recorder.

Design points the rest of the package relies on:

* double precision everywhere; gradient checks demand it
* ``backward`` accumulates into ``.grad`` across calls (reset via
  ``zero_grad``), and one call folds contributions in a fixed reverse
  recording order, so results are bit-reproducible
* ops whose inputs all have ``requires_grad=False`` record nothing and
  behave as constants, which is what makes ``detach`` cut the graph
"""

import itertools

import numpy as np

from . import kernels

_SEQ = itertools.count()


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the shape it broadcast from."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    """Dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._seq = next(_SEQ)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _op(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """Same values, no gradient connection to whatever produced them."""
        return Tensor(self.data)

    # -- elementwise arithmetic (numpy broadcasting rules) --------------------

    def _coerce(self, other):
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=np.float64))

    def __add__(self, other):
        other = self._coerce(other)
        def backward(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))
        return Tensor._op(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        def backward(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape))
        return Tensor._op(self.data - other.data, (self, other), backward)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        def backward(g):
            return (_unbroadcast(g * other.data, self.shape),
                    _unbroadcast(g * self.data, other.shape))
        return Tensor._op(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        def backward(g):
            return (_unbroadcast(g / other.data, self.shape),
                    _unbroadcast(-g * self.data / (other.data * other.data), other.shape))
        return Tensor._op(self.data / other.data, (self, other), backward)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        def backward(g):
            return (-g,)
        return Tensor._op(-self.data, (self,), backward)

    # -- unary maps -----------------------------------------------------------

    def relu(self):
        mask = self.data > 0.0
        def backward(g):
            return (g * mask,)
        return Tensor._op(np.where(mask, self.data, 0.0), (self,), backward)

    def sigmoid(self):
        # branch on sign so exp never overflows, even at |x| ~ 1e3
        x = self.data
        out = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        def backward(g):
            return (g * out * (1.0 - out),)
        return Tensor._op(out, (self,), backward)

    def log(self):
        def backward(g):
            return (g / self.data,)
        return Tensor._op(np.log(self.data), (self,), backward)

    def abs(self):
        sign = np.sign(self.data)
        def backward(g):
            return (g * sign,)
        return Tensor._op(np.abs(self.data), (self,), backward)

    def clamp(self, lo, hi):
        """Clip values into [lo, hi]; gradient is zero where clipping bit."""
        inside = (self.data >= lo) & (self.data <= hi)
        def backward(g):
            return (g * inside,)
        return Tensor._op(np.clip(self.data, lo, hi), (self,), backward)

    # -- reductions / shape ---------------------------------------------------

    def sum(self):
        shape = self.shape
        def backward(g):
            return (np.full(shape, float(g)),)
        return Tensor._op(self.data.sum(), (self,), backward)

    def mean(self):
        shape = self.shape
        n = self.data.size
        def backward(g):
            return (np.full(shape, float(g) / n),)
        return Tensor._op(self.data.mean(), (self,), backward)

    def reshape(self, *shape):
        old = self.shape
        def backward(g):
            return (g.reshape(old),)
        return Tensor._op(self.data.reshape(*shape), (self,), backward)

    def backward(self):
        backward(self)


# -- module-level op spellings (the names the rest of the package uses) -------

def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def mul(a, b):
    return a * b


def scalar_mul(t, s):
    return t * float(s)


def relu(t):
    return t.relu()


def sigmoid(t):
    return t.sigmoid()


def tsum(t):
    return t.sum()


def tmean(t):
    return t.mean()


def concat(tensors, axis=1):
    """Concatenate along a given axis (channel axis by default)."""
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def backward(g):
        out = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            out.append(g[tuple(index)])
        return tuple(out)
    return Tensor._op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def narrow(t, axis, start, length):
    """Slice [start, start+length) along one axis."""
    index = [slice(None)] * t.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    shape = t.shape
    def backward(g):
        gx = np.zeros(shape)
        gx[index] = g
        return (gx,)
    return Tensor._op(t.data[index], (t,), backward)


def linear(x, weight, bias=None):
    """Affine map of (B, in) rows by an (out, in) weight and (out,) bias."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"linear expects (B,in) x (out,in); got {x.shape} and {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"bias shape {bias.shape} does not match out={weight.shape[0]}")
        out = out + bias.data
        def backward(g):
            return (g @ weight.data, g.T @ x.data, g.sum(axis=0))
        return Tensor._op(out, (x, weight, bias), backward)
    def backward(g):
        return (g @ weight.data, g.T @ x.data)
    return Tensor._op(out, (x, weight), backward)


def conv2d(x, weight, bias=None, stride=1, padding=0, dilation=1):
    """Cross-correlation of (B,Cin,H,W) by (Cout,Cin,k,k), via im2col + matmul."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-d input and weight; got {x.shape} and {weight.shape}")
    if weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d kernel must be square; got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"conv2d bias shape {bias.shape} != ({weight.shape[0]},)")
    out, cols = kernels.conv2d_forward(
        x.data, weight.data, None if bias is None else bias.data, stride, padding, dilation)
    x_shape = x.shape
    def backward(g):
        need_gx = x.requires_grad
        gx, gw, gb = kernels.conv2d_backward(
            np.ascontiguousarray(g), cols, x_shape, weight.data, stride, padding, dilation) \
            if need_gx else (None,) + kernels.conv2d_backward_params(
                np.ascontiguousarray(g), cols, weight.shape)
        if bias is None:
            return (gx, gw)
        return (gx, gw, gb)
    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._op(out, parents, backward)


def maxpool2d(x, kernel, stride=1, padding=0):
    """Per-window max; gradient routes to the first argmax per window."""
    if x.data.ndim != 4:
        raise ValueError(f"maxpool2d expects a 4-d input; got {x.shape}")
    out, idx = kernels.maxpool_forward(x.data, kernel, stride, padding)
    h, w = x.shape[2], x.shape[3]
    def backward(g):
        return (kernels.maxpool_backward(np.ascontiguousarray(g), idx, h, w),)
    return Tensor._op(out, (x,), backward)


def bilinear_resize(x, out_h, out_w):
    """Half-pixel-centred bilinear resize to an arbitrary spatial size."""
    if x.data.ndim != 4:
        raise ValueError(f"bilinear_resize expects a 4-d input; got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    i0, i1, fi = kernels.bilinear_coeffs(h, out_h)
    j0, j1, fj = kernels.bilinear_coeffs(w, out_w)
    out = kernels.bilinear_forward(x.data, i0, i1, fi, j0, j1, fj)
    def backward(g):
        return (kernels.bilinear_backward(np.ascontiguousarray(g), i0, i1, fi, j0, j1, fj, h, w),)
    return Tensor._op(out, (x,), backward)


def bilinear_upsample(x, scale):
    """Half-pixel-centred bilinear resize by an integer factor."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1; got {scale}")
    return bilinear_resize(x, x.shape[2] * scale, x.shape[3] * scale)


def pad_edge_br(x, bottom, right):
    """Replicate-pad the bottom/right spatial edges by 0 or 1 cells.

    Exists so stride-2 pooling can run in ceil mode on odd sizes without
    inventing values: replicated cells tie with their source and lose
    first-occurrence argmax, so gradients still reach real pixels.
    """
    if bottom not in (0, 1) or right not in (0, 1):
        raise ValueError("pad_edge_br pads by at most one cell per edge")
    if bottom == 0 and right == 0:
        return x
    h, w = x.shape[2], x.shape[3]
    out = np.pad(x.data, ((0, 0), (0, 0), (0, bottom), (0, right)), mode="edge")
    def backward(g):
        gx = g[:, :, :h, :w].copy()
        if bottom:
            gx[:, :, h - 1, :] += g[:, :, h, :w]
        if right:
            gx[:, :, :, w - 1] += g[:, :, :h, w]
        if bottom and right:
            gx[:, :, h - 1, w - 1] += g[:, :, h, w]
        return (gx,)
    return Tensor._op(out, (x,), backward)


def global_avg_pool(x):
    """Mean over the spatial axes, keeping a 1x1 spatial footprint."""
    if x.data.ndim != 4:
        raise ValueError(f"global_avg_pool expects a 4-d input; got {x.shape}")
    b, c, h, w = x.shape
    def backward(g):
        return (np.broadcast_to(g / (h * w), (b, c, h, w)),)
    return Tensor._op(x.data.mean(axis=(2, 3), keepdims=True), (x,), backward)


def detach(t):
    return t.detach()


class Tape:
    """Ordered record of the operations below a root tensor.

    The creation counter on tensors is the recording order, so the record
    is recovered by collecting ancestors and sorting; reversal then visits
    operations in exact reverse execution order.
    """

    def __init__(self, root):
        seen = set()
        nodes = []
        stack = [root]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq)
        self.nodes = nodes

    def reversed_ops(self):
        for t in reversed(self.nodes):
            if t._backward is not None:
                yield t


def backward(loss):
    """Accumulate d(loss)/d(tensor) into .grad for every tensor on the tape.

    Repeated calls keep accumulating; contributions inside one call are
    folded in fixed reverse recording order.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss; got shape {loss.shape}")
    tape = Tape(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for t in tape.reversed_ops():
        g = grads.get(id(t))
        if g is None:
            continue
        contribs = t._backward(g)
        for parent, contrib in zip(t._parents, contribs):
            if contrib is None or not parent.requires_grad:
                continue
            pid = id(parent)
            held = grads.get(pid)
            # '+' rather than '+=': contributions may alias shared buffers
            grads[pid] = contrib if held is None else held + contrib
    for t in tape.nodes:
        if t.requires_grad and id(t) in grads:
            g = grads[id(t)]
            t.grad = g if t.grad is None else t.grad + g
