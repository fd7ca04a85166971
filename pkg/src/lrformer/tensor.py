"""Dense tensor engine with reverse-mode differentiation.

A :class:`Tensor` wraps a contiguous numpy array (float32 by default,
float64 for gradient/oracle checks).  Operations record nodes on a global
:class:`Tape` whenever gradients are enabled and at least one input
requires them; :func:`backward` replays the tape once in reverse and
populates ``grad`` on every leaf.

The same operation layer hosts the MAC-counting hook used by the cost
analyzer: inside a :func:`count_macs` context every operation reports the
multiply-accumulates it performs, tagged by category.  Composite
operations do their internal arithmetic on raw numpy buffers so nothing is
counted twice.

Forward operators are pure functions of their inputs.  The tape is
single-writer: one training/backward pass owns it at a time.  Tensors are
safe to share read-only across threads.
"""

from contextlib import contextmanager

import numpy as np
from scipy import special

from .errors import ConfigError, ShapeError

_SUPPORTED_DTYPES = (np.float32, np.float64)


class Tensor:
    """N-dimensional real array with optional gradient-tape participation."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the free functions below do the real work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not supported; divide by a scalar")
        return mul(self, 1.0 / float(other))


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so every node's inputs precede
    it; the backward replay is a single reverse sweep that visits each
    recorded node exactly once.
    """

    def __init__(self):
        self.nodes = []

    def record(self, out, inputs, backward_fn):
        self.nodes.append(_Node(out, inputs, backward_fn))

    def clear(self):
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)


tape = Tape()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _record(out, inputs, backward_fn):
    if out.requires_grad:
        tape.record(out, inputs, backward_fn)


def _tracks(*tensors) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def backward(loss: Tensor):
    """Populate ``grad`` on every requires-grad leaf with dloss/dleaf.

    ``loss`` must be a scalar produced by recorded operations.  Gradients
    accumulate into existing ``grad`` buffers; the tape is cleared on exit.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not tape.nodes:
        raise ShapeError("backward() called with an empty tape")

    produced = {id(node.out) for node in tape.nodes}
    grads = {id(loss): np.ones_like(loss.data)}
    try:
        for node in reversed(tape.nodes):
            gout = grads.pop(id(node.out), None)
            if gout is None:
                continue
            gins = node.backward_fn(gout)
            for tin, gin in zip(node.inputs, gins):
                if gin is None or not tin.requires_grad:
                    continue
                key = id(tin)
                if key in produced:
                    if key in grads:
                        grads[key] = grads[key] + gin
                    else:
                        grads[key] = gin
                else:
                    tin.grad = gin if tin.grad is None else tin.grad + gin
    finally:
        tape.clear()


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum out axes that numpy broadcasting expanded, back to ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# MAC counting hook
# ---------------------------------------------------------------------------

class MacCounter:
    """Tally of multiply-accumulates reported by executed operations."""

    HEADLINE = ("matmul", "conv", "interp")

    def __init__(self):
        self.by_category = {}
        self.events = []

    def add(self, category: str, macs: int, shape=None):
        self.by_category[category] = self.by_category.get(category, 0) + int(macs)
        self.events.append((category, int(macs), tuple(shape) if shape is not None else None))

    def total(self, *categories) -> int:
        cats = categories or tuple(self.by_category)
        return sum(self.by_category.get(c, 0) for c in cats)

    @property
    def headline(self) -> int:
        """MACs in the categories that count toward reported FLOPs."""
        return self.total(*self.HEADLINE)


_meter = None


@contextmanager
def count_macs():
    """Collect per-operation MAC counts for everything run inside."""
    global _meter
    prev = _meter
    _meter = MacCounter()
    try:
        yield _meter
    finally:
        _meter = prev


def _emit(category, macs, shape=None):
    if _meter is not None:
        _meter.add(category, macs, shape)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product ``a @ b`` with broadcastable batch dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)
    if _meter is not None:
        batch = 1
        for extent in out_data.shape[:-2]:
            batch *= extent
        _emit("matmul", batch * out_data.shape[-2] * a.shape[-1] * out_data.shape[-1],
              out_data.shape)
    out = Tensor(out_data, requires_grad=_tracks(a, b))

    def bwd(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    _record(out, (a, b), bwd)
    return out


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out = Tensor(a.data + b.data, requires_grad=_tracks(a, b))

    def bwd(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    _record(out, (a, b), bwd)
    return out


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out = Tensor(a.data * b.data, requires_grad=_tracks(a, b))

    def bwd(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    _record(out, (a, b), bwd)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), requires_grad=_tracks(x))
    _record(out, (x,), lambda g: (g.reshape(x.shape),))
    return out


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(np.transpose(x.data, axes)), requires_grad=_tracks(x))
    _record(out, (x,), lambda g: (np.transpose(g, inverse),))
    return out


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 requires_grad=_tracks(*tensors))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    _record(out, tuple(tensors), bwd)
    return out


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims), requires_grad=_tracks(x))
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))

    def bwd(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, tuple(np.atleast_1d(axis)))
        return (np.broadcast_to(g, x.shape) / count,)

    _record(out, (x,), bwd)
    return out


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), requires_grad=_tracks(x))

    def bwd(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, tuple(np.atleast_1d(axis)))
        return (np.broadcast_to(g, x.shape).copy(),)

    _record(out, (x,), bwd)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Exp-normalize along ``axis`` with max subtraction for stability."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    y = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=_tracks(x))

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    _record(out, (x,), bwd)
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz
    out = Tensor(y, requires_grad=_tracks(x))

    def bwd(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    _record(out, (x,), bwd)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis (per-token channels), then affine."""
    if eps <= 0:
        raise ConfigError("layer_norm eps must be positive")
    if x.shape[-1] != gamma.shape[-1] or x.shape[-1] != beta.shape[-1]:
        raise ShapeError(f"layer_norm channel mismatch: x {x.shape}, gamma {gamma.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = xc * istd
    out = Tensor(xhat * gamma.data + beta.data, requires_grad=_tracks(x, gamma, beta))
    n = x.shape[-1]

    def bwd(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = _unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gbeta = _unbroadcast(g, beta.shape)
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = istd * (dxhat
                         - dxhat.mean(axis=-1, keepdims=True)
                         - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / n)
        return gx, ggamma, gbeta

    _record(out, (x, gamma, beta), bwd)
    return out


_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def gelu(x: Tensor) -> Tensor:
    """Exact erf-based GELU: x * Phi(x)."""
    phi = 0.5 * (1.0 + special.erf(x.data * _INV_SQRT2))
    out = Tensor((x.data * phi).astype(x.dtype, copy=False), requires_grad=_tracks(x))

    def bwd(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return ((g * (phi + x.data * pdf)).astype(x.dtype, copy=False),)

    _record(out, (x,), bwd)
    return out


def _zero_pad(arr: np.ndarray, p: int) -> np.ndarray:
    if not p:
        return arr
    b, c, h, w = arr.shape
    out = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=arr.dtype)
    out[:, :, p:p + h, p:p + w] = arr
    return out


def conv2d(x: Tensor, w: Tensor, bias=None, stride: int = 1, padding: int = 0,
           groups: int = 1) -> Tensor:
    """Grouped 2D cross-correlation with zero padding.

    ``x`` is (B, C_in, H, W), ``w`` is (C_out, C_in/groups, k, k) with odd
    square k; output extents are floor((H + 2p - k)/s) + 1.  Depthwise
    (groups == C_in == C_out) runs an elementwise accumulation over the
    k*k taps; other cases run one matmul per tap.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4D input and weight, got {x.shape}, {w.shape}")
    bsz, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"conv2d kernel must be odd and square, got {kh}x{kw}")
    if cin % groups != 0 or cout % groups != 0:
        raise ConfigError(f"channels ({cin}->{cout}) not divisible by groups={groups}")
    if cg != cin // groups:
        raise ShapeError(f"weight expects {cg} input channels per group, input has {cin // groups}")
    k, s, p = kh, int(stride), int(padding)
    hout = (h + 2 * p - k) // s + 1
    wout = (wd + 2 * p - k) // s + 1
    if hout <= 0 or wout <= 0:
        raise ShapeError(f"conv2d output would be empty for input {h}x{wd}, k={k}, s={s}, p={p}")
    depthwise = groups == cin == cout

    xp = _zero_pad(x.data, p)
    og = cout // groups
    # (B, C_in, hout, wout, k, k) strided view of the receptive fields
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]

    if depthwise:
        out_data = np.einsum("bchwij,cij->bchw", win, w.data[:, 0], optimize=False)
    else:
        wg = w.data.reshape(groups, og, cg * k * k)
        cols = win.reshape(bsz, groups, cg, hout, wout, k, k)
        cols = cols.transpose(0, 1, 3, 4, 2, 5, 6).reshape(bsz, groups, hout * wout, cg * k * k)
        out_data = np.matmul(cols, np.swapaxes(wg, -1, -2)[None])
        out_data = np.swapaxes(out_data, -1, -2).reshape(bsz, cout, hout, wout)
    if bias is not None:
        out_data += bias.data[None, :, None, None]
    if _meter is not None:
        _emit("conv", bsz * hout * wout * cout * cg * k * k, out_data.shape)

    inputs = (x, w) if bias is None else (x, w, bias)
    out = Tensor(out_data, requires_grad=_tracks(*inputs))

    def bwd(g):
        gx = gw = gb = None
        taps = [(ki, kj) for ki in range(k) for kj in range(k)]

        def tap_view(arr, ki, kj):
            return arr[..., ki:ki + s * hout:s, kj:kj + s * wout:s]

        if depthwise:
            if w.requires_grad:
                gw = np.einsum("bchwij,bchw->cij", win, g, optimize=False)[:, None]
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                wv = w.data.reshape(cout, k * k)
                for t, (ki, kj) in enumerate(taps):
                    tap_view(gxp, ki, kj)[...] += g * wv[None, :, t, None, None]
                gx = gxp[:, :, p:p + h, p:p + wd] if p else gxp
                gx = np.ascontiguousarray(gx)
        else:
            wg = w.data.reshape(groups, og, cg * k * k)
            gcols = g.reshape(bsz, groups, og, hout * wout)
            gcols = np.swapaxes(gcols, -1, -2)  # (B, g, S, og)
            if w.requires_grad:
                gw = np.matmul(np.swapaxes(gcols, -1, -2), cols).sum(axis=0)
                gw = gw.reshape(w.shape)
            if x.requires_grad:
                dcols = np.matmul(gcols, wg[None])  # (B, g, S, cg*k*k)
                gxp = np.zeros((bsz, groups, cg, xp.shape[2], xp.shape[3]), dtype=x.dtype)
                for t, (ki, kj) in enumerate(taps):
                    tap = np.swapaxes(dcols[..., t::k * k], -1, -2)
                    tap_view(gxp, ki, kj)[...] += tap.reshape(bsz, groups, cg, hout, wout)
                gx = gxp.reshape(xp.shape)
                gx = gx[:, :, p:p + h, p:p + wd] if p else gx
                gx = np.ascontiguousarray(gx)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    _record(out, inputs, bwd)
    return out


def _pool_edges(extent: int, bins: int) -> np.ndarray:
    # Floor edges i*extent//bins partition [0, extent): every row/column
    # lands in exactly one bin, and for extent % bins == 0 this matches the
    # usual floor/ceil bin formula.
    return np.array([i * extent // bins for i in range(bins + 1)], dtype=np.int64)


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Mean over a grid of bins that tile the input exactly."""
    if out_h <= 0 or out_w <= 0:
        raise ConfigError(f"pooled grid must be positive, got {out_h}x{out_w}")
    if x.ndim != 4:
        raise ShapeError(f"adaptive_avg_pool2d expects 4D input, got {x.shape}")
    bsz, c, h, w = x.shape
    if out_h > h or out_w > w:
        raise ConfigError(f"pooled grid {out_h}x{out_w} exceeds input {h}x{w}")
    eh = _pool_edges(h, out_h)
    ew = _pool_edges(w, out_w)
    ch = np.diff(eh)
    cw = np.diff(ew)
    sums = np.add.reduceat(x.data, eh[:-1], axis=2)
    sums = np.add.reduceat(sums, ew[:-1], axis=3)
    area = (ch[:, None] * cw[None, :]).astype(x.dtype)
    out = Tensor(sums / area, requires_grad=_tracks(x))
    _emit("pool", bsz * c * h * w, out.shape)

    def bwd(g):
        per = g / area
        gx = np.repeat(np.repeat(per, ch, axis=2), cw, axis=3)
        return (gx.astype(x.dtype, copy=False),)

    _record(out, (x,), bwd)
    return out


def _resize_weights(n_in: int, n_out: int, dtype) -> np.ndarray:
    # Half-pixel source centers, no corner alignment; two taps per output.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    np.add.at(mat, (np.arange(n_out), i0), 1.0 - t)
    np.add.at(mat, (np.arange(n_out), i1), t)
    return mat.astype(dtype)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resample with half-pixel centers; identity at equal size."""
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"resize target must be positive, got {out_h}x{out_w}")
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resize expects 4D input, got {x.shape}")
    bsz, c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        out = Tensor(x.data.copy(), requires_grad=_tracks(x))
        _record(out, (x,), lambda g: (g,))
        return out
    wh = _resize_weights(h, out_h, x.dtype)
    ww = _resize_weights(w, out_w, x.dtype)
    # Separable resample as two broadcast matmuls over the trailing axes.
    out_data = np.matmul(np.matmul(wh, x.data), ww.T)
    out = Tensor(out_data, requires_grad=_tracks(x))
    _emit("interp", 4 * bsz * c * out_h * out_w, out.shape)

    def bwd(g):
        return (np.matmul(np.matmul(wh.T, g), ww),)

    _record(out, (x,), bwd)
    return out


def take_channel(x: Tensor, index: np.ndarray) -> Tensor:
    """Select per-pixel channel entries: out[b,h,w] = x[b, index[b,h,w], h, w]."""
    if x.ndim != 4 or index.shape != (x.shape[0],) + x.shape[2:]:
        raise ShapeError(f"take_channel shapes mismatch: {x.shape} vs index {index.shape}")
    idx = index[:, None, :, :]
    out = Tensor(np.take_along_axis(x.data, idx, axis=1)[:, 0], requires_grad=_tracks(x))

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g[:, None], axis=1)
        return (gx,)

    _record(out, (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# Layout helpers (tape-recorded, so gradients flow through)
# ---------------------------------------------------------------------------

def spatial_to_tokens(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, H*W, C)."""
    b, c, h, w = x.shape
    return reshape(transpose(x, (0, 2, 3, 1)), (b, h * w, c))


def tokens_to_spatial(x: Tensor, h: int, w: int) -> Tensor:
    """(B, H*W, C) -> (B, C, H, W)."""
    b, n, c = x.shape
    if n != h * w:
        raise ShapeError(f"{n} tokens cannot fill a {h}x{w} grid")
    return transpose(reshape(x, (b, h, w, c)), (0, 3, 1, 2))


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def finite_diff_grad(f, x: Tensor, eps: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``, same shape as x."""
    if eps <= 0:
        raise ConfigError("finite_diff_grad eps must be positive")
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = _scalar(f(x))
            flat[i] = orig - eps
            lo = _scalar(f(x))
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def _scalar(value) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def check_finite(x: Tensor, label: str = "tensor"):
    """All-finite assertion; NaN/Inf is an error condition, never silent."""
    if not np.isfinite(x.data).all():
        raise FloatingPointError(f"{label} contains non-finite values")
    return x
