"""Dense float64 tensors and a recording tape for reverse-mode autodiff.

A `Tape` records every op in execution order (which is a topological order
of the DAG); `backward` walks the record once, in reverse, accumulating
gradients into `.grad`. Tensors are treated as immutable while a tape is
recording; parameter updates happen between tapes.

Ops report coarse flop counts to the active `FlopCounter` scope so that the
energy proxy sees both forward and backward work.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ContractViolationError, DimensionError
from .flops import count

_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tensor:
    """A float64 array, optionally participating in autodiff."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # operator sugar; all arithmetic routes through the module-level ops
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out, parents, backward_fn):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Op recorder. Use as a context manager around a forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        self._prev = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def __len__(self):
        return len(self.nodes)


def _record(out: Tensor, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    tape = _active_tape()
    if tape is not None:
        tape.nodes.append(_Node(out, parents, backward_fn))
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad += g


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(tensor) into `.grad` for everything on `tape`.

    `loss` must be a scalar recorded on the tape. Each node is visited
    exactly once, in reverse recording order.
    """
    if loss.data.size != 1:
        raise ContractViolationError(
            f"backward requires a scalar loss, got shape {loss.data.shape}"
        )
    for node in tape.nodes:
        node.out.grad = None
        for p in node.parents:
            p.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        node.backward_fn(g)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    count("elementwise", out.size)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _record(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    count("elementwise", out.size)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _record(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    count("elementwise", out.size)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))
        count("elementwise", 2 * g.size)

    return _record(out, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data)
    count("elementwise", out.size)

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        count("elementwise", 4 * g.size)

    return _record(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def bw(g):
        _accum(a, -g)

    return _record(out, (a,), bw)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python constant (no gradient for the constant)."""
    c = float(c)
    out = Tensor(a.data * c)
    count("elementwise", out.size)

    def bw(g):
        _accum(a, g * c)

    return _record(out, (a,), bw)


def add_const(a: Tensor, c) -> Tensor:
    out = Tensor(a.data + c)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))

    return _record(out, (a,), bw)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def _unary(a: Tensor, value: np.ndarray, dfn) -> Tensor:
    out = Tensor(value)
    count("elementwise", out.size)

    def bw(g):
        _accum(a, g * dfn())
        count("elementwise", g.size)

    return _record(out, (a,), bw)


def sin(a: Tensor) -> Tensor:
    return _unary(a, np.sin(a.data), lambda: np.cos(a.data))


def cos(a: Tensor) -> Tensor:
    return _unary(a, np.cos(a.data), lambda: -np.sin(a.data))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _unary(a, y, lambda: 1.0 - y * y)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _unary(a, y, lambda: y)


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    return _unary(a, y, lambda: 0.5 / y)


def relu(a: Tensor) -> Tensor:
    return _unary(a, np.maximum(a.data, 0.0), lambda: (a.data > 0.0).astype(np.float64))


def square(a: Tensor) -> Tensor:
    return _unary(a, a.data * a.data, lambda: 2.0 * a.data)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    count("reduce", a.size)

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy() if np.ndim(g) else np.full(a.shape, float(g)))
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(a, np.broadcast_to(gg, a.shape).copy())

    return _record(out, (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def bw(g):
        _accum(a, g.reshape(a.shape))

    return _record(out, (a,), bw)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def bw(g):
        _accum(a, g.transpose(inv))

    return _record(out, (a,), bw)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _record(out, tuple(tensors), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; either both stacked with identical leading dims, or
    `b` a plain matrix applied to the trailing axes of `a`."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul leading extents differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    m, k, n = a.shape[-2], a.shape[-1], b.shape[-1]
    batch = int(np.prod(a.shape[:-2], dtype=np.int64)) if a.ndim > 2 else 1
    count("matmul", 2 * batch * m * k * n)

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        _accum(a, _unbroadcast(ga, a.shape))
        if b.ndim == 2 and a.ndim > 2:
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(b, _unbroadcast(gb, b.shape))
        count("matmul", 4 * batch * m * k * n)

    return _record(out, (a, b), bw)


# ---------------------------------------------------------------------------
# 2-d spatial ops (NCHW layout)


def pad2d(a: Tensor, p: int, mode: str) -> Tensor:
    """Pad the two trailing axes by `p`; mode 'zero' or 'circular'."""
    if p == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(p, p), (p, p)]
    if mode == "zero":
        out = Tensor(np.pad(a.data, widths, mode="constant"))
    elif mode == "circular":
        out = Tensor(np.pad(a.data, widths, mode="wrap"))
    else:
        raise DimensionError(f"unknown padding mode {mode!r}")
    H, W = a.shape[-2], a.shape[-1]
    if mode == "circular" and (p > H or p > W):
        raise DimensionError("circular padding wider than the field is unsupported")

    def bw(g):
        core = g[..., p:p + H, p:p + W].copy()
        if mode == "circular":
            core[..., :p, :] += g[..., p + H:, p:p + W]
            core[..., H - p:, :] += g[..., :p, p:p + W]
            core[..., :, :p] += g[..., p:p + H, p + W:]
            core[..., :, W - p:] += g[..., p:p + H, :p]
            core[..., :p, :p] += g[..., p + H:, p + W:]
            core[..., :p, W - p:] += g[..., p + H:, :p]
            core[..., H - p:, :p] += g[..., :p, p + W:]
            core[..., H - p:, W - p:] += g[..., :p, :p]
        _accum(a, core)

    return _record(out, (a,), bw)


def conv2d(a: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Valid (unpadded) 2-d convolution via im2col.

    a: [B, Cin, Hp, Wp]; weight: [Cout, Cin, k, k]; bias: [Cout].
    Output: [B, Cout, Hp-k+1, Wp-k+1]. Pad beforehand with `pad2d`.
    """
    B, Cin, Hp, Wp = a.shape
    Cout, Cin_w, k, k2 = weight.shape
    if Cin != Cin_w or k != k2:
        raise DimensionError(f"conv2d weight {weight.shape} incompatible with input {a.shape}")
    H, W = Hp - k + 1, Wp - k + 1
    if H < 1 or W < 1:
        raise DimensionError(f"conv2d kernel {k} larger than padded input {a.shape}")
    win = np.lib.stride_tricks.sliding_window_view(a.data, (k, k), axis=(2, 3))
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, Cin * k * k, H * W)
    wmat = weight.data.reshape(Cout, Cin * k * k)
    y = np.einsum("ok,bkp->bop", wmat, cols, optimize=True) + bias.data[None, :, None]
    out = Tensor(y.reshape(B, Cout, H, W))
    macs = B * Cout * Cin * k * k * H * W
    count("conv", 2 * macs)

    def bw(g):
        gmat = g.reshape(B, Cout, H * W)
        gw = np.einsum("bop,bkp->ok", gmat, cols, optimize=True).reshape(weight.shape)
        _accum(weight, gw)
        _accum(bias, gmat.sum(axis=(0, 2)))
        gcols = np.einsum("ok,bop->bkp", wmat, gmat, optimize=True)
        gcols = gcols.reshape(B, Cin, k, k, H, W)
        ga = np.zeros((B, Cin, Hp, Wp))
        for ki in range(k):
            for kj in range(k):
                ga[:, :, ki:ki + H, kj:kj + W] += gcols[:, :, ki, kj]
        _accum(a, ga)
        count("conv", 4 * macs)

    return _record(out, (a, weight, bias), bw)


def avg_pool2d(a: Tensor, f: int) -> Tensor:
    """Non-overlapping f x f mean pooling over the trailing axes (NCHW)."""
    H, W = a.shape[-2], a.shape[-1]
    if H % f or W % f:
        raise DimensionError(f"pool factor {f} does not divide spatial extents {(H, W)}")
    lead = a.shape[:-2]
    blocks = a.data.reshape(*lead, H // f, f, W // f, f)
    out = Tensor(blocks.mean(axis=(-3, -1)))
    count("reduce", a.size)

    def bw(g):
        gg = g[..., :, None, :, None] / (f * f)
        _accum(a, np.broadcast_to(gg, (*lead, H // f, f, W // f, f)).reshape(a.shape).copy())

    return _record(out, (a,), bw)


def upsample_nearest2d(a: Tensor, f: int) -> Tensor:
    out = Tensor(a.data.repeat(f, axis=-2).repeat(f, axis=-1))

    def bw(g):
        lead = a.shape[:-2]
        H, W = a.shape[-2], a.shape[-1]
        _accum(a, g.reshape(*lead, H, f, W, f).sum(axis=(-3, -1)))

    return _record(out, (a,), bw)


# ---------------------------------------------------------------------------
# spectral convolution (the FFT-space linear layer)


def spectral_conv2d(a: Tensor, w_re: Tensor, w_im: Tensor, modes_x: int, modes_y: int) -> Tensor:
    """Per-mode complex channel mixing on the lowest Fourier modes.

    a: [B, Cin, H, W] real. Weights: [Cout, Cin, 2*modes_x, modes_y] as
    separate real/imaginary parts. Kept rows are the first and last
    `modes_x` frequencies of the (full) row spectrum; kept columns are the
    first `modes_y` of the half-spectrum. Everything above the kept modes
    is zeroed, so the layer output is band-limited by construction.
    """
    B, Cin, H, W = a.shape
    Cout = w_re.shape[0]
    if modes_x < 1 or modes_x > H // 2 or modes_y < 1 or modes_y > W // 2 + 1:
        raise DimensionError(
            f"modes ({modes_x},{modes_y}) exceed grid Nyquist extents for {(H, W)}"
        )
    if w_re.shape != (Cout, Cin, 2 * modes_x, modes_y) or w_im.shape != w_re.shape:
        raise DimensionError(f"spectral weight shape {w_re.shape} inconsistent with modes")

    X = np.fft.rfft2(a.data)  # [B, Cin, H, W//2+1], unnormalized forward
    rows = np.r_[0:modes_x, H - modes_x:H]
    Xk = X[:, :, rows, :modes_y]
    Wc = w_re.data + 1j * w_im.data
    Yk = np.einsum("ocxy,bcxy->boxy", Wc, Xk, optimize=True)
    Yf = np.zeros((B, Cout, H, W // 2 + 1), dtype=np.complex128)
    Yf[:, :, rows, :modes_y] = Yk
    out = Tensor(np.fft.irfft2(Yf, s=(H, W)))

    n = H * W
    fft_cost = int(5 * n * np.log2(n))
    mode_cost = 8 * B * Cout * Cin * 2 * modes_x * modes_y
    count("fft", (B * Cin + B * Cout) * fft_cost)
    count("spectral_mix", mode_cost)

    def bw(g):
        G = np.fft.rfft2(g)
        Gk = G[:, :, rows, :modes_y]
        # adjoint of the mode mixing: conjugate-transposed weights
        gXk = np.einsum("ocxy,boxy->bcxy", np.conj(Wc), Gk, optimize=True)
        gXf = np.zeros((B, Cin, H, W // 2 + 1), dtype=np.complex128)
        gXf[:, :, rows, :modes_y] = gXk
        _accum(a, np.fft.irfft2(gXf, s=(H, W)))
        # weight gradient: doubled on columns with an implicit conjugate twin
        colw = np.full(modes_y, 2.0)
        colw[0] = 1.0
        if modes_y == W // 2 + 1:
            colw[-1] = 1.0
        gW = np.einsum("boxy,bcxy->ocxy", Gk, np.conj(Xk), optimize=True)
        gW *= colw / (H * W)
        _accum(w_re, gW.real.copy())
        _accum(w_im, gW.imag.copy())
        count("fft", (B * Cin + B * Cout) * fft_cost)
        count("spectral_mix", 2 * mode_cost)

    return _record(out, (a, w_re, w_im), bw)
