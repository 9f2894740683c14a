"""Eager reverse-mode autodiff over float64 numpy arrays.

Every op builds its output Tensor with a closure that pushes the output
gradient into its parents.  `Tensor.backward` walks the graph in reverse
topological order.  Layout for activations is N x C x T x H x W.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "mask", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 _parents: tuple = ()):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.name = name
        # entries reached by a `take` during backward; consumed by sparse optimizer steps
        self.mask: np.ndarray | None = None
        self._parents = _parents if self.requires_grad else ()
        self._backward = None

    # -- bookkeeping ---------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor({self.name or 'anon'}, shape={self.shape})"

    def zero_grad(self):
        self.grad = None
        self.mask = None

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) * grad into every leaf's `.grad`.

        `grad` defaults to 1 for a scalar; a float rescales the seed, which is
        how per-sample posterior weights enter the shared-weight gradient.
        """
        if not self.requires_grad:
            raise RuntimeError("backward on a tensor that does not require grad")
        if grad is None or np.isscalar(grad):
            scale = 1.0 if grad is None else float(grad)
            seed = np.full(self.shape, scale, dtype=DTYPE)
        else:
            seed = _as_array(grad)
            if seed.shape != self.shape:
                raise ValueError(f"seed gradient shape {seed.shape} != {self.shape}")
        order, seen = [], set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_lift(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data, parents, backward, name="") -> Tensor:
    out = Tensor(data, _parents=tuple(parents), name=name)
    if out.requires_grad:
        out._backward = backward
    return out


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# elementwise / shape ops

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _op(a.data + b.data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _op(a.data * b.data, (a, b), backward, "mul")


def tsum(a: Tensor) -> Tensor:
    return _op(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape),), "sum")


def reshape(a: Tensor, shape) -> Tensor:
    return _op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def matmul(a, b) -> Tensor:
    """np.matmul semantics with batch broadcasting."""
    a, b = _lift(a), _lift(b)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _op(a.data @ b.data, (a, b), backward, "matmul")


def take(a: Tensor, index) -> Tensor:
    """Sub-block a[np.ix_(*index)]; `None` entries keep a whole axis.

    Gradients scatter back into the selected entries only, and the selection
    is recorded in `a.mask` so sparse optimizer steps leave the rest intact.
    """
    index = list(index) + [None] * (a.data.ndim - len(index))
    ix = np.ix_(*[np.arange(n) if i is None else np.asarray(i, dtype=np.intp)
                  for i, n in zip(index, a.shape)])
    out_data = a.data[ix]

    def backward(g):
        full = np.zeros_like(a.data)
        full[ix] = g
        if a.mask is None:
            a.mask = np.zeros(a.shape, dtype=bool)
        a.mask[ix] = True
        return (full,)

    return _op(out_data, (a,), backward, "take")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _op(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def swish(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def backward(g):
        return (g * (s + x.data * s * (1.0 - s)),)

    return _op(x.data * s, (x,), backward, "swish")


# ---------------------------------------------------------------------------
# 3D convolution

def _out_size(n, k, s):
    return (n + 2 * (k // 2) - k) // s + 1


def _windows(x, kshape, stride):
    """Strided view N x C x T' x H' x W' x kt x kh x kw over the padded input."""
    kt, kh, kw = kshape
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    v = sliding_window_view(xp, kshape, axis=(2, 3, 4))
    return v[:, :, :, ::stride, ::stride]


def _taps(kshape, thw_out, stride):
    """(a, b, e, slice) per kernel tap, indexing the padded input."""
    kt, kh, kw = kshape
    to, ho, wo = thw_out
    for a in range(kt):
        for b in range(kh):
            for e in range(kw):
                yield a, b, e, (slice(None), slice(None), slice(a, a + to),
                                slice(b, b + stride * (ho - 1) + 1, stride),
                                slice(e, e + stride * (wo - 1) + 1, stride))


def _depthwise(x, w, stride):
    """Depthwise correlation accumulated tap by tap; returns output and padded input."""
    n, c, t, h, wd = x.shape
    kt, kh, kw = w.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0), (kt // 2,) * 2, (kh // 2,) * 2, (kw // 2,) * 2))
    out_thw = (t, _out_size(h, kh, stride), _out_size(wd, kw, stride))
    out = np.zeros((n, c) + out_thw)
    for a, b, e, sl in _taps((kt, kh, kw), out_thw, stride):
        out += xp[sl] * w[:, 0, a, b, e].reshape(1, c, 1, 1, 1)
    return out, xp


def conv3d_forward(x: np.ndarray, w: np.ndarray, stride: int = 1, groups: int = 1):
    """Cross-correlation with "same" padding on T/H/W and spatial stride.

    x: N x C x T x H x W.  w: C_out x C_in/groups x kt x kh x kw.
    groups is 1 (dense) or C_in (depthwise, C_out == C_in).
    Returns (output, ctx) where ctx is what `conv3d_backward` needs.
    """
    if x.ndim != 5 or w.ndim != 5:
        raise ValueError(f"conv3d expects 5-D input and kernel, got {x.shape}, {w.shape}")
    n, c, t, h, wd = x.shape
    co, cg, kt, kh, kw = w.shape
    if any(k % 2 == 0 for k in (kt, kh, kw)):
        raise ValueError("conv3d kernels must have odd extents")
    if groups == 1:
        if cg != c:
            raise ValueError(f"kernel expects {cg} input channels, got {c}")
    elif groups == c:
        if cg != 1 or co != c:
            raise ValueError(f"depthwise kernel must be {c}x1xkxkxk, got {w.shape}")
    else:
        raise ValueError("groups must be 1 or equal to the input channels")
    out_thw = (t, _out_size(h, kh, stride), _out_size(wd, kw, stride))
    K = kt * kh * kw
    ctx = {"x_shape": x.shape, "w": w, "stride": stride, "groups": groups}
    if groups != 1:
        out, ctx["padded"] = _depthwise(x, w, stride)
        return out, ctx
    if K == 1:
        cols = x[:, :, :, ::stride, ::stride].reshape(n, c, -1)
    else:
        v = _windows(x, (kt, kh, kw), stride)
        cols = np.ascontiguousarray(v.transpose(0, 1, 5, 6, 7, 2, 3, 4)).reshape(n, c * K, -1)
    ctx["cols"] = cols
    out = w.reshape(co, c * K) @ cols
    return out.reshape(n, co, *out_thw), ctx


def conv3d_backward(grad_out: np.ndarray, ctx, need_input: bool = True):
    """Exact (input_grad, kernel_grad) for a `conv3d_forward` call.

    With need_input=False the input gradient is skipped and returned as None.
    """
    if not ctx or not ("cols" in ctx or "padded" in ctx):
        raise ValueError("conv3d_backward needs the context saved by conv3d_forward")
    w, s, groups = ctx["w"], ctx["stride"], ctx["groups"]
    n, c, t, h, wd = ctx["x_shape"]
    co, cg, kt, kh, kw = w.shape
    K = kt * kh * kw
    to, ho, wo = grad_out.shape[2:]
    if groups != 1:
        xp = ctx["padded"]
        taps = list(_taps((kt, kh, kw), (to, ho, wo), s))
        gw = np.empty(w.shape)
        for a, b, e, sl in taps:
            gw[:, 0, a, b, e] = np.einsum("ncthw,ncthw->c", grad_out, xp[sl])
        if not need_input:
            return None, gw
        gxp = np.zeros(xp.shape)
        for a, b, e, sl in taps:
            gxp[sl] += grad_out * w[:, 0, a, b, e].reshape(1, c, 1, 1, 1)
        pt, ph, pw = kt // 2, kh // 2, kw // 2
        return gxp[:, :, pt:pt + t, ph:ph + h, pw:pw + wd], gw
    cols = ctx["cols"]
    g = grad_out.reshape(n, co, -1)
    gw = (g @ np.swapaxes(cols, 1, 2)).sum(axis=0).reshape(w.shape)
    if not need_input:
        return None, gw
    gcols = w.reshape(co, c * K).T @ g
    if K == 1:
        if s == 1:
            return gcols.reshape(n, c, t, h, wd), gw
        gx = np.zeros((n, c, t, h, wd))
        gx[:, :, :, ::s, ::s] = gcols.reshape(n, c, to, ho, wo)
        return gx, gw
    return _scatter(gcols.reshape(n, c, kt, kh, kw, to, ho, wo), (t, h, wd), s), gw


def _scatter(gcols, thw, s):
    """Adjoint of the strided window view: gcols is N x C x kt x kh x kw x T' x H' x W'."""
    n, c, kt, kh, kw, to, ho, wo = gcols.shape
    t, h, wd = thw
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    gxp = np.zeros((n, c, t + 2 * pt, h + 2 * ph, wd + 2 * pw))
    for a in range(kt):
        for b in range(kh):
            for e in range(kw):
                gxp[:, :, a:a + to, b:b + s * (ho - 1) + 1:s, e:e + s * (wo - 1) + 1:s] += gcols[:, :, a, b, e]
    return gxp[:, :, pt:pt + t, ph:ph + h, pw:pw + wd]


def conv3d(x: Tensor, w: Tensor, stride: int = 1, groups: int = 1) -> Tensor:
    out, ctx = conv3d_forward(x.data, w.data, stride, groups)

    def backward(g):
        return conv3d_backward(g, ctx, need_input=x.requires_grad)

    return _op(out, (x, w), backward, "conv3d")


# ---------------------------------------------------------------------------
# normalization, pooling, dense layers, loss

class RunningStats:
    """Per-channel running mean/variance for eval-mode batch norm."""

    def __init__(self, channels: int, momentum: float = 0.1):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)
        self.momentum = momentum

    def update(self, mean, var):
        m = self.momentum
        self.mean = (1 - m) * self.mean + m * mean
        self.var = (1 - m) * self.var + m * var


def batchnorm3d(x: Tensor, gamma: Tensor, beta: Tensor, train: bool = True,
                stats: RunningStats | None = None, eps: float = 1e-5) -> Tensor:
    axes = (0, 2, 3, 4)
    bshape = (1, -1, 1, 1, 1)
    if train:
        m = x.data.size // x.shape[1]
        if m < 2:
            raise ValueError("batch norm needs more than one value per channel in train mode")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if stats is not None:
            stats.update(mean, var * m / (m - 1))
    else:
        if stats is None:
            raise ValueError("eval-mode batch norm needs running statistics")
        mean, var = stats.mean, stats.var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if train:
            m = x.data.size // x.shape[1]
            gx = (inv.reshape(bshape) / m) * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = dxhat * inv.reshape(bshape)
        return gx, ggamma, gbeta

    return _op(out, (x, gamma, beta), backward, "batchnorm3d")


def global_avg_pool(x: Tensor) -> Tensor:
    n, c = x.shape[:2]
    count = int(np.prod(x.shape[2:]))

    def backward(g):
        return (np.broadcast_to((g / count).reshape(n, c, 1, 1, 1), x.shape).copy(),)

    return _op(x.data.mean(axis=(2, 3, 4)), (x,), backward, "avgpool")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x: N x in, weight: out x in, bias: out."""
    out = matmul(x, transpose(weight, (1, 0)))
    return add(out, bias) if bias is not None else out


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, np.ndarray]:
    """Mean negative log-likelihood and per-sample log-likelihoods."""
    labels = np.asarray(labels, dtype=np.intp)
    n, k = logits.shape
    if n == 0:
        raise ValueError("empty batch")
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be {n} integers in [0, {k})")
    logp = log_softmax(logits.data)
    loglik = logp[np.arange(n), labels]

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return _op(-loglik.mean(), (logits,), backward, "softmax_ce"), loglik
