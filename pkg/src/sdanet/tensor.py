"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation records its inputs and a vector-Jacobian
closure on the output tensor. ``backward`` walks that record once in
reverse topological order and accumulates gradients into the leaves.
All storage is 64-bit float so finite-difference checks are meaningful.

A record is single-use: running backward through a node a second time
raises ``LifecycleError``. Leaves (parameters, inputs) are reusable and
accumulate gradients additively until ``zero_grad``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import (
    ConfigError,
    ContractError,
    DegenerateRowError,
    LifecycleError,
    ShapeError,
)

_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_consumed")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.size != 1:
            raise ContractError(f"item() needs a single element; got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        kind = "Tensor" if not isinstance(self, Parameter) else f"Parameter {self.name!r}"
        return f"<{kind} shape={self.shape} grad={'yes' if self.requires_grad else 'no'}>"

    def detach(self):
        """Leaf copy of this tensor, cut from the record."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

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

    def __neg__(self):
        return neg(self)

    def abs(self):
        return tensor_abs(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Named trainable leaf."""

    __slots__ = ("name",)

    def __init__(self, name, value):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.name = name


def _as_tensor(v):
    return v if isinstance(v, Tensor) else Tensor(v)


def _op(data, parents, make_vjp):
    """Build the output tensor, recording the vjp only when grads can flow."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(data)
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = make_vjp()
        return out
    return Tensor(data)


def _unbroadcast(g, shape):
    """Sum g down to `shape`, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def make():
        na, nb = a.requires_grad, b.requires_grad
        sa, sb = a.shape, b.shape
        return lambda g: (_unbroadcast(g, sa) if na else None,
                          _unbroadcast(g, sb) if nb else None)

    return _op(a.data + b.data, (a, b), make)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def make():
        na, nb = a.requires_grad, b.requires_grad
        sa, sb = a.shape, b.shape
        return lambda g: (_unbroadcast(g, sa) if na else None,
                          _unbroadcast(-g, sb) if nb else None)

    return _op(a.data - b.data, (a, b), make)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def make():
        na, nb = a.requires_grad, b.requires_grad
        sa, sb = a.shape, b.shape
        ad, bd = a.data, b.data
        return lambda g: (_unbroadcast(g * bd, sa) if na else None,
                          _unbroadcast(g * ad, sb) if nb else None)

    return _op(a.data * b.data, (a, b), make)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def make():
        na, nb = a.requires_grad, b.requires_grad
        sa, sb = a.shape, b.shape
        ad, bd = a.data, b.data
        return lambda g: (_unbroadcast(g / bd, sa) if na else None,
                          _unbroadcast(-g * ad / (bd * bd), sb) if nb else None)

    return _op(a.data / b.data, (a, b), make)


def neg(a):
    a = _as_tensor(a)
    return _op(-a.data, (a,), lambda: lambda g: (-g,))


def tensor_abs(a):
    a = _as_tensor(a)

    def make():
        sign = np.sign(a.data)
        return lambda g: (g * sign,)

    return _op(np.abs(a.data), (a,), make)


def sqrt(a):
    a = _as_tensor(a)
    out_data = np.sqrt(a.data)

    def make():
        # Floored denominator keeps the gradient finite when a value sits
        # exactly at zero (callers floor such denominators themselves).
        safe = np.maximum(out_data, 1e-300)
        return lambda g: (g * 0.5 / safe,)

    return _op(out_data, (a,), make)


def maximum(a, floor):
    """Elementwise max(a, floor) against a python scalar."""
    a = _as_tensor(a)
    floor = float(floor)

    def make():
        keep = (a.data >= floor).astype(np.float64)
        return lambda g: (g * keep,)

    return _op(np.maximum(a.data, floor), (a,), make)


# -- activations ---------------------------------------------------------

def sigmoid(a):
    a = _as_tensor(a)
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def make():
        s = out_data
        return lambda g: (g * s * (1.0 - s),)

    return _op(out_data, (a,), make)


def gelu(a):
    """Exact-erf GELU: x * Phi(x)."""
    a = _as_tensor(a)
    x = a.data
    phi_cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    out_data = x * phi_cdf

    def make():
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        deriv = phi_cdf + x * pdf
        return lambda g: (g * deriv,)

    return _op(out_data, (a,), make)


def activation(a, kind):
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "gelu":
        return gelu(a)
    raise ConfigError(f"unknown activation {kind!r}; expected 'sigmoid' or 'gelu'")


def acos_clamped(a, interior=1e-7):
    """arccos with the value clamped to [-1, 1].

    The derivative argument is clamped to the interior band
    [-1+interior, 1-interior] so the slope stays bounded at the endpoints;
    the value itself is exact there (0 at cos=1, pi at cos=-1).
    """
    a = _as_tensor(a)
    out_data = np.arccos(np.clip(a.data, -1.0, 1.0))

    def make():
        cc = np.clip(a.data, -1.0 + interior, 1.0 - interior)
        slope = -1.0 / np.sqrt(1.0 - cc * cc)
        return lambda g: (g * slope,)

    return _op(out_data, (a,), make)


# -- reductions ----------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axes = tuple(sorted(a % ndim for a in axis))
    if len(set(axes)) != len(axes):
        raise ConfigError(f"repeated reduction axis in {axis!r}")
    for a in axes:
        if not 0 <= a < ndim:
            raise ShapeError(f"reduction axis {a} out of range for rank {ndim}")
    return axes


def tensor_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def make():
        shape = a.shape

        def run(g):
            gg = g
            if not keepdims:
                for ax in axes:
                    gg = np.expand_dims(gg, ax)
            return (np.broadcast_to(gg, shape).copy(),)

        return run

    return _op(out_data, (a,), make)


def tensor_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    out_data = a.data.mean(axis=axes, keepdims=keepdims)

    def make():
        shape = a.shape
        inv = 1.0 / count

        def run(g):
            gg = g
            if not keepdims:
                for ax in axes:
                    gg = np.expand_dims(gg, ax)
            return (np.broadcast_to(gg, shape) * inv,)

        return run

    return _op(out_data, (a,), make)


def global_avg_pool(a, axes):
    """Mean over `axes`, removing them from the shape."""
    a = _as_tensor(a)
    if not axes:
        raise ConfigError("global_avg_pool needs at least one axis")
    return tensor_mean(a, axis=tuple(axes), keepdims=False)


# -- structural ops ------------------------------------------------------

def reshape(a, shape):
    a = _as_tensor(a)
    try:
        out_data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}: {exc}") from None

    def make():
        orig = a.shape
        return lambda g: (g.reshape(orig),)

    return _op(out_data, (a,), make)


def transpose(a, axes):
    a = _as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose axes {axes} are not a permutation of rank {a.ndim}")
    out_data = a.data.transpose(axes)

    def make():
        inverse = tuple(np.argsort(axes))
        return lambda g: (np.ascontiguousarray(g.transpose(inverse)),)

    return _op(out_data, (a,), make)


def narrow(a, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    a = _as_tensor(a)
    if not 0 <= axis < a.ndim:
        raise ShapeError(f"narrow axis {axis} out of range for rank {a.ndim}")
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise ShapeError(
            f"narrow window [{start}, {start + length}) exceeds extent "
            f"{a.shape[axis]} on axis {axis}")
    index = tuple(slice(None) if i != axis else slice(start, start + length)
                  for i in range(a.ndim))
    out_data = a.data[index]

    def make():
        shape = a.shape

        def run(g):
            gx = np.zeros(shape)
            gx[index] = g
            return (gx,)

        return run

    return _op(out_data, (a,), make)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ConfigError("concat needs at least one tensor")
    nd = tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != nd:
            raise ShapeError(f"concat rank mismatch: {t.ndim} vs {nd}")
        for ax in range(nd):
            if ax != axis and t.shape[ax] != tensors[0].shape[ax]:
                raise ShapeError(
                    f"concat extent mismatch on axis {ax}: "
                    f"{t.shape[ax]} vs {tensors[0].shape[ax]}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def make():
        needs = [t.requires_grad for t in tensors]
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def run(g):
            outs = []
            for i in range(len(sizes)):
                if not needs[i]:
                    outs.append(None)
                    continue
                idx = tuple(slice(None) if d != axis else
                            slice(offsets[i], offsets[i + 1]) for d in range(g.ndim))
                outs.append(np.ascontiguousarray(g[idx]))
            return tuple(outs)

        return run

    return _op(out_data, tuple(tensors), make)


def stack(tensors, axis=0):
    """Stack along a new leading axis (composition of reshape + concat)."""
    tensors = [_as_tensor(t) for t in tensors]
    if axis != 0:
        raise ConfigError("stack supports axis 0 only")
    expanded = [reshape(t, (1,) + t.shape) for t in tensors]
    return concat(expanded, axis=0)


# -- linear algebra ------------------------------------------------------

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands; got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner extents disagree: axis 1 of left is {a.shape[1]}, "
            f"axis 0 of right is {b.shape[0]}")

    def make():
        na, nb = a.requires_grad, b.requires_grad
        ad, bd = a.data, b.data
        return lambda g: (g @ bd.T if na else None,
                          ad.T @ g if nb else None)

    return _op(a.data @ b.data, (a, b), make)


def conv2d(x, w, bias=None, groups=1, padding=0):
    """Grouped 2-D cross-correlation, stride 1, symmetric zero padding."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4 (batch, channel, height, width); got rank {x.ndim}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d weight must be rank 4 (out, in/groups, k, k); got rank {w.ndim}")
    n, cin, h, wd = x.shape
    cout, cg, k, k2 = w.shape
    if k != k2:
        raise ShapeError(f"conv2d kernel must be square; got {k}x{k2}")
    if not isinstance(groups, int) or groups < 1:
        raise ConfigError(f"groups must be a positive integer; got {groups!r}")
    if cin % groups != 0:
        raise ConfigError(f"input channels {cin} not divisible by groups {groups}")
    if cout % groups != 0:
        raise ConfigError(f"output channels {cout} not divisible by groups {groups}")
    if cg != cin // groups:
        raise ShapeError(
            f"weight axis 1 must be {cin // groups} (input channels per group); got {cg}")
    if not isinstance(padding, int) or padding < 0:
        raise ConfigError(f"padding must be a non-negative integer; got {padding!r}")
    if h + 2 * padding - k + 1 < 1:
        raise ShapeError(f"kernel {k} exceeds padded height {h + 2 * padding} on axis 2")
    if wd + 2 * padding - k + 1 < 1:
        raise ShapeError(f"kernel {k} exceeds padded width {wd + 2 * padding} on axis 3")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"bias must have shape ({cout},); got {bias.shape}")

    out_data = kernels.conv2d_forward(x.data, w.data,
                                      None if bias is None else bias.data,
                                      groups, padding)

    def make():
        nx, nw = x.requires_grad, w.requires_grad
        nb = bias is not None and bias.requires_grad
        xd, wdat = x.data, w.data

        def run(g):
            g = np.ascontiguousarray(g)
            gx = kernels.conv2d_backward_input(g, wdat, groups, padding, h, wd) if nx else None
            gw = kernels.conv2d_backward_weight(xd, g, groups, padding, k) if nw else None
            gb = g.sum(axis=(0, 2, 3)) if nb else None
            return (gx, gw, gb) if bias is not None else (gx, gw)

        return run

    parents = (x, w) if bias is None else (x, w, bias)
    return _op(out_data, parents, make)


# -- attention helpers ---------------------------------------------------

def softmax_rows(logits, mask=None):
    """Row softmax on a rank-2 tensor; entries where mask is False are
    excluded from normalization and come out exactly zero."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_rows needs a rank-2 tensor; got rank {logits.ndim}")
    x = logits.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match logits shape {x.shape}")
        alive = mask.any(axis=1)
        if not alive.all():
            row = int(np.argmin(alive))
            raise DegenerateRowError(f"softmax row {row} has no unmasked entries")
        z = np.where(mask, x, -np.inf)
    else:
        z = x
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    out_data = e / e.sum(axis=1, keepdims=True)

    def make():
        s = out_data

        def run(g):
            dot = (g * s).sum(axis=1, keepdims=True)
            return (s * (g - dot),)

        return run

    return _op(out_data, (logits,), make)


def topk_row_indices(values, k):
    """Column indices of the k largest entries per row (ties keep the
    lowest index), returned sorted ascending. Not differentiable."""
    data = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"topk_row_indices needs a rank-2 array; got rank {data.ndim}")
    cols = data.shape[1]
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= cols:
        raise ConfigError(f"k must lie in [1, {cols}]; got {k!r}")
    order = np.argsort(-data, axis=1, kind="stable")
    return np.sort(order[:, :k], axis=1)


def topk_row_mask(values, k):
    """Boolean keep-mask with exactly k True entries per row."""
    data = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    idx = topk_row_indices(data, k)
    mask = np.zeros(data.shape, dtype=bool)
    np.put_along_axis(mask, idx, True, axis=1)
    return mask


# -- normalization and layout --------------------------------------------

def layer_norm(x, gamma, beta, eps=1e-6):
    """Normalize over the channel axis independently at each position."""
    x = _as_tensor(x)
    gamma, beta = _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 4:
        raise ShapeError(f"layer_norm input must be rank 4; got rank {x.ndim}")
    c = x.shape[1]
    if gamma.shape != (c,):
        raise ShapeError(f"gamma must have shape ({c},); got {gamma.shape}")
    if beta.shape != (c,):
        raise ShapeError(f"beta must have shape ({c},); got {beta.shape}")
    if eps <= 0:
        raise ConfigError(f"eps must be positive; got {eps}")

    xd = x.data
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gb = gamma.data[None, :, None, None]
    out_data = gb * xhat + beta.data[None, :, None, None]

    def make():
        nx, ng, nbta = x.requires_grad, gamma.requires_grad, beta.requires_grad

        def run(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3)) if ng else None
            dbeta = g.sum(axis=(0, 2, 3)) if nbta else None
            if nx:
                dxhat = g * gb
                term = dxhat.mean(axis=1, keepdims=True)
                proj = (dxhat * xhat).mean(axis=1, keepdims=True)
                dx = inv * (dxhat - term - xhat * proj)
            else:
                dx = None
            return (dx, dgamma, dbeta)

        return run

    return _op(out_data, (x, gamma, beta), make)


def pixel_shuffle(x, r):
    """Rearrange (n, c*r*r, h, w) to (n, c, h*r, w*r):
    out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w]."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"pixel_shuffle input must be rank 4; got rank {x.ndim}")
    if not isinstance(r, int) or r < 1:
        raise ConfigError(f"shuffle factor must be a positive integer; got {r!r}")
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ConfigError(f"channels {c} not divisible by r*r = {r * r}")
    cq = c // (r * r)
    out_data = (x.data.reshape(n, cq, r, r, h, w)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(n, cq, h * r, w * r))

    def make():
        def run(g):
            gx = (g.reshape(n, cq, h, r, w, r)
                  .transpose(0, 1, 3, 5, 2, 4)
                  .reshape(n, c, h, w))
            return (np.ascontiguousarray(gx),)

        return run

    return _op(np.ascontiguousarray(out_data), (x,), make)


# -- backward engine -----------------------------------------------------

def backward(loss):
    """Reverse sweep from a scalar loss; gradients land in leaf .grad."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward needs a Tensor")
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss; got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on anything that requires grad")

    topo = []
    visited = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        if node._parents and node._consumed:
            raise LifecycleError(
                "backward already consumed part of this record; rebuild the "
                "forward pass before differentiating again")
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack_.append((p, False))

    grads = {id(loss): np.ones(loss.shape)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._parents:
            contribs = node._vjp(g)
            for parent, contrib in zip(node._parents, contribs):
                if contrib is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib
            node._consumed = True
        else:
            node.grad = g.copy() if node.grad is None else node.grad + g
