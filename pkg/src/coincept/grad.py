"""Dense-array compute engine with reverse-mode differentiation.

A :class:`Tape` records every primitive operation in execution order, which
is a topological order by construction.  :func:`backward` replays the tape in
exact reverse, accumulating each node's gradient as the sum over all of its
consumers.  The op set is deliberately small: exactly what the encoder and
the contrastive losses need.  There is no general broadcasting; every op
states its shape contract and raises :class:`InvalidArgumentError` otherwise.

Two precisions are supported: ``float64`` for property/gradient testing and
``float32`` (the default) for training.  Precision is fixed per tape and
never mixed inside one graph.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

_PRECISIONS = {"float32": np.float32, "float64": np.float64}


class Tape:
    """Op recorder for one forward/backward pass. Strictly single-threaded."""

    def __init__(self, precision: str = "float32"):
        if precision not in _PRECISIONS:
            raise InvalidArgumentError(
                f"precision must be one of {sorted(_PRECISIONS)}, got {precision!r}"
            )
        self.precision = precision
        self.dtype = np.dtype(_PRECISIONS[precision])
        self._nodes: list[Var] = []

    def var(self, data, requires_grad: bool = True) -> "Var":
        """Wrap an array as a leaf node (a parameter when requires_grad)."""
        arr = np.ascontiguousarray(data, dtype=self.dtype)
        return Var(self, arr, requires_grad=requires_grad)

    def const(self, data) -> "Var":
        """Wrap an array as a non-differentiable leaf."""
        return self.var(data, requires_grad=False)

    def __len__(self):
        return len(self._nodes)


class Var:
    """A node on a tape: an immutable array value plus gradient plumbing."""

    __slots__ = ("tape", "data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, tape: Tape, data: np.ndarray, requires_grad: bool):
        self.tape = tape
        self.data = data
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Var, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        tape._nodes.append(self)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError(f"item() on non-scalar shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Var(shape={self.shape}, dtype={self.data.dtype})"

    # Operator sugar used by the loss code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return scale(self, 1.0 / float(c))

    def __neg__(self):
        return scale(self, -1.0)


def _accumulate(var: Var, g: np.ndarray) -> None:
    if not var.requires_grad:
        return
    if g.shape != var.data.shape:
        raise InvalidArgumentError(
            f"gradient shape {g.shape} does not match value shape {var.data.shape}"
        )
    if var.grad is None:
        var.grad = np.zeros_like(var.data)
    var.grad += g


def _node(tape: Tape, data: np.ndarray, parents: Sequence[Var], backward) -> Var:
    out = Var(tape, data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_same_tape(*vars_: Var) -> Tape:
    tape = vars_[0].tape
    for v in vars_[1:]:
        if v.tape is not tape:
            raise InvalidArgumentError("operands recorded on different tapes")
    return tape


def backward(root: Var) -> None:
    """Reverse-accumulate d(root)/d(leaf) into every reachable leaf's ``grad``.

    The root must be scalar.  Leaves with requires_grad that the root does not
    reach end up with an exact-zero gradient array (not None), so optimizer
    code never has to special-case unreached parameters.
    """
    if root.data.size != 1:
        raise InvalidArgumentError(
            f"backward root must be scalar, got shape {root.shape}"
        )
    _accumulate(root, np.ones_like(root.data))
    for node in reversed(root.tape._nodes):
        if node.grad is None or node._backward is None:
            continue
        node._backward(node.grad)
    for node in root.tape._nodes:
        if node.requires_grad and node._backward is None and node.grad is None:
            node.grad = np.zeros_like(node.data)


# ---------------------------------------------------------------------------
# Elementwise ops
# ---------------------------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    tape = _check_same_tape(a, b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(tape, a.data + b.data, (a, b), bw)


def sub(a: Var, b: Var) -> Var:
    tape = _check_same_tape(a, b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"sub shape mismatch: {a.shape} vs {b.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(tape, a.data - b.data, (a, b), bw)


def mul(a: Var, b: Var) -> Var:
    tape = _check_same_tape(a, b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def bw(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(tape, a.data * b.data, (a, b), bw)


def scale(a: Var, c: float) -> Var:
    c = float(c)

    def bw(g):
        _accumulate(a, g * c)

    return _node(a.tape, a.data * a.tape.dtype.type(c), (a,), bw)


def shift(a: Var, c) -> Var:
    """Add a constant array or scalar (no gradient through the constant)."""
    carr = np.asarray(c, dtype=a.tape.dtype)
    if carr.ndim and carr.shape != a.shape:
        raise InvalidArgumentError(f"shift shape mismatch: {a.shape} vs {carr.shape}")

    def bw(g):
        _accumulate(a, g)

    return _node(a.tape, a.data + carr, (a,), bw)


def relu(a: Var) -> Var:
    pos = a.data > 0

    def bw(g):
        _accumulate(a, g * pos)

    return _node(a.tape, np.where(pos, a.data, 0), (a,), bw)


def leaky_relu(a: Var, slope: float = 0.01) -> Var:
    """x for x >= 0, slope * x otherwise. Subgradient at 0 is 1."""
    slope = float(slope)
    if not 0.0 < slope < 1.0:
        raise InvalidArgumentError(f"leaky_relu slope must be in (0, 1), got {slope}")
    neg = a.data < 0

    def bw(g):
        _accumulate(a, np.where(neg, g * slope, g))

    return _node(a.tape, np.where(neg, a.data * a.tape.dtype.type(slope), a.data), (a,), bw)


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------


def transpose(a: Var, axes: Sequence[int]) -> Var:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise InvalidArgumentError(f"bad transpose axes {axes} for ndim {a.ndim}")
    inv = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))

    def bw(g):
        _accumulate(a, np.ascontiguousarray(np.transpose(g, inv)))

    return _node(a.tape, np.ascontiguousarray(np.transpose(a.data, axes)), (a,), bw)


def concat(parts: Sequence[Var], axis: int) -> Var:
    if not parts:
        raise InvalidArgumentError("concat of zero arrays")
    tape = _check_same_tape(*parts)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accumulate(p, np.ascontiguousarray(piece))

    return _node(tape, np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def narrow(a: Var, axis: int, start: int, length: int) -> Var:
    """Contiguous slice [start, start+length) along one axis."""
    if not (0 <= start and start + length <= a.shape[axis] and length >= 1):
        raise InvalidArgumentError(
            f"narrow [{start}, {start + length}) out of range for axis {axis} "
            f"of shape {a.shape}"
        )
    idx = tuple(
        slice(start, start + length) if d == axis else slice(None) for d in range(a.ndim)
    )

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)

    return _node(a.tape, np.ascontiguousarray(a.data[idx]), (a,), bw)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def _reduce_axes(a: Var, axis):
    if axis is None:
        return tuple(range(a.ndim))
    if isinstance(axis, int):
        return (axis % a.ndim,)
    return tuple(ax % a.ndim for ax in axis)


def vsum(a: Var, axis=None) -> Var:
    axes = _reduce_axes(a, axis)

    def bw(g):
        ge = np.expand_dims(g, axes) if g.ndim != a.ndim else g
        _accumulate(a, np.broadcast_to(ge, a.shape).copy())

    return _node(a.tape, a.data.sum(axis=axes), (a,), bw)


def mean(a: Var, axis=None) -> Var:
    axes = _reduce_axes(a, axis)
    n = int(np.prod([a.shape[ax] for ax in axes]))

    def bw(g):
        ge = np.expand_dims(g, axes) if g.ndim != a.ndim else g
        _accumulate(a, np.broadcast_to(ge / n, a.shape).copy())

    return _node(a.tape, a.data.mean(axis=axes), (a,), bw)


def logsumexp(a: Var, axis: int = -1) -> Var:
    """Max-shifted log-sum-exp along one axis.

    Entries at or below ~-1e30 underflow to an exact zero weight, so they are
    usable as masks without producing NaN in either direction.
    """
    axis = axis % a.ndim
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m, axis=axis) + np.log(np.squeeze(s, axis=axis))
    w = e / s  # softmax weights, reused by the gradient

    def bw(g):
        _accumulate(a, np.expand_dims(g, axis) * w)

    return _node(a.tape, out, (a,), bw)


# ---------------------------------------------------------------------------
# Neural-net primitives
# ---------------------------------------------------------------------------


def linear(x: Var, w: Var, b: Var) -> Var:
    """Per-timestep affine map: (B,T,F) x (F,G) + (G,) -> (B,T,G)."""
    tape = _check_same_tape(x, w, b)
    if x.ndim != 3 or w.ndim != 2 or b.ndim != 1:
        raise InvalidArgumentError(
            f"linear expects (B,T,F),(F,G),(G,), got {x.shape},{w.shape},{b.shape}"
        )
    if x.shape[2] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise InvalidArgumentError(
            f"linear inner dims mismatch: {x.shape} x {w.shape} + {b.shape}"
        )

    def bw(g):
        _accumulate(x, np.matmul(g, w.data.T))
        _accumulate(w, np.tensordot(x.data, g, axes=([0, 1], [0, 1])))
        _accumulate(b, g.sum(axis=(0, 1)))

    return _node(tape, np.matmul(x.data, w.data) + b.data, (x, w, b), bw)


def matmul(a: Var, b: Var) -> Var:
    """2-D or batched 3-D matrix product with identical batch extents."""
    tape = _check_same_tape(a, b)
    ok = (a.ndim == b.ndim) and a.ndim in (2, 3) and a.shape[-1] == b.shape[-2]
    if ok and a.ndim == 3:
        ok = a.shape[0] == b.shape[0]
    if not ok:
        raise InvalidArgumentError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _node(tape, np.matmul(a.data, b.data), (a, b), bw)


def _same_padding(k: int, dilation: int) -> tuple[int, int]:
    # Left-biased split keeps output length equal to input length.
    total = dilation * (k - 1)
    left = (total + 1) // 2
    return left, total - left


def conv1d(x: Var, w: Var, b: Var, dilation: int = 1) -> Var:
    """Dilated 1-D convolution with zero same-length padding.

    ``x``: (B, C_in, T); ``w``: (C_out, C_in, k); ``b``: (C_out,).  Output has
    shape (B, C_out, T);  out[b,o,t] = bias[o] + sum_{c,j} xpad[b,c,t+d*j] *
    w[o,c,j] with pad_left = ceil(d*(k-1)/2).
    """
    tape = _check_same_tape(x, w, b)
    if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
        raise InvalidArgumentError(
            f"conv1d expects (B,C,T),(O,C,k),(O,), got {x.shape},{w.shape},{b.shape}"
        )
    n_batch, c_in, t_len = x.shape
    c_out, c_in_w, k = w.shape
    dilation = int(dilation)
    if k < 1 or dilation < 1:
        raise InvalidArgumentError(f"conv1d needs k >= 1 and dilation >= 1, got {k}, {dilation}")
    if c_in_w != c_in or b.shape[0] != c_out:
        raise InvalidArgumentError(
            f"conv1d channel mismatch: x has {c_in}, w {w.shape}, b {b.shape}"
        )
    if t_len < 1:
        raise InvalidArgumentError("conv1d on empty time axis")
    pl, pr = _same_padding(k, dilation)
    if dilation * (k - 1) + 1 > t_len + pl + pr:
        raise InvalidArgumentError(
            f"effective span {dilation * (k - 1) + 1} exceeds padded length {t_len + pl + pr}"
        )
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr)))
    acc = np.zeros((n_batch, c_out, t_len), dtype=tape.dtype)
    for j in range(k):
        acc += np.matmul(w.data[:, :, j], xp[:, :, j * dilation : j * dilation + t_len])
    acc += b.data[None, :, None]

    def bw(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, :, j * dilation : j * dilation + t_len] += np.matmul(
                    w.data[:, :, j].T, g
                )
            _accumulate(x, gxp[:, :, pl : pl + t_len])
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for j in range(k):
                gw[:, :, j] = np.tensordot(
                    g, xp[:, :, j * dilation : j * dilation + t_len], axes=([0, 2], [0, 2])
                )
            _accumulate(w, gw)
        _accumulate(b, g.sum(axis=(0, 2)))

    return _node(tape, acc, (x, w, b), bw)


def maxpool1d(x: Var, kernel: int, stride: int, padding: str = "halving") -> Var:
    """Max pooling along the last axis of a (B, C, T) array.

    Two schemes are supported:

    * ``halving`` (kernel=2, stride=2): output length ceil(T/2); a trailing
      lone element passes through unchanged.
    * ``same`` (stride=1, odd kernel): length-preserving sliding max.

    Gradient routes 1.0 to the first (lowest-index) maximum of each window.
    """
    if x.ndim != 3:
        raise InvalidArgumentError(f"maxpool1d expects (B,C,T), got {x.shape}")
    n_batch, n_ch, t_len = x.shape
    if t_len < 1:
        raise InvalidArgumentError("maxpool1d on empty time axis")
    if kernel < 1 or stride < 1:
        raise InvalidArgumentError(f"maxpool1d needs kernel/stride >= 1, got {kernel}/{stride}")

    if padding == "halving":
        if kernel != 2 or stride != 2:
            raise InvalidArgumentError("halving mode requires kernel=2, stride=2")
        t_out = (t_len + 1) // 2
        xp = x.data
        if t_len % 2:
            xp = np.pad(xp, ((0, 0), (0, 0), (0, 1)), constant_values=-np.inf)
        pairs = xp.reshape(n_batch, n_ch, t_out, 2)
        idx = pairs.argmax(axis=3)
        out = np.take_along_axis(pairs, idx[..., None], axis=3)[..., 0]

        def bw(g):
            gp = np.zeros_like(pairs)
            np.put_along_axis(gp, idx[..., None], g[..., None], axis=3)
            _accumulate(x, gp.reshape(n_batch, n_ch, 2 * t_out)[:, :, :t_len])

        return _node(x.tape, np.ascontiguousarray(out), (x,), bw)

    if padding == "same":
        if stride != 1 or kernel % 2 == 0:
            raise InvalidArgumentError("same mode requires stride=1 and odd kernel")
        half = kernel // 2
        xp = np.pad(x.data, ((0, 0), (0, 0), (half, half)), constant_values=-np.inf)
        windows = np.stack([xp[:, :, j : j + t_len] for j in range(kernel)], axis=3)
        idx = windows.argmax(axis=3)
        out = np.take_along_axis(windows, idx[..., None], axis=3)[..., 0]

        def bw(g):
            gxp = np.zeros_like(xp)
            for j in range(kernel):
                gxp[:, :, j : j + t_len] += g * (idx == j)
            _accumulate(x, gxp[:, :, half : half + t_len])

        return _node(x.tape, np.ascontiguousarray(out), (x,), bw)

    raise InvalidArgumentError(f"unknown padding scheme {padding!r}")
