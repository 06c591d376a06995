"""Dense float64 tensors with reverse-mode differentiation.

Every operation here is a pure function building a computation graph;
calling ``backward()`` on a scalar result fills ``grad`` on each tensor
created with ``requires_grad=True``. Gradients are analytic per kernel and
are checked against central finite differences (``finite_diff_check``),
which is the arbiter of correctness, not an implementation path.

Reductions over interchangeable operands (softmax normalizer, weighted
neighbor sums) accumulate in value-sorted order so results depend only on
the operand multiset, never on labeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes violate an operation's contract."""


class NumericError(ArithmeticError):
    """A computation produced or received a non-finite value."""


def _canonical_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    # Sorting first makes the accumulation order a function of the value
    # multiset only, so relabeling operands cannot change a single bit.
    return np.add.reduce(np.sort(values, axis=axis), axis=axis)


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor rejects non-finite values at construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...],
                backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor (a scalar unless ``seed`` is given)."""
        if seed is None:
            if self.data.shape != ():
                raise DimensionError("backward() without seed needs a scalar")
            seed = np.ones((), dtype=np.float64)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self._accumulate(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra kernels


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix (m,k)@(k,n) or matrix-vector (m,k)@(k,) product."""
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise DimensionError(f"matmul expects 2-d by 1/2-d, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        if b.data.ndim == 1:
            if a.requires_grad:
                a._accumulate(np.outer(g, b.data))
            if b.requires_grad:
                b._accumulate(a.data.T @ g)
        else:
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

    return Tensor._result(out_data, (a, b), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-d tensors, returning a scalar tensor."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise DimensionError(f"dot expects matching vectors, got {a.shape}, {b.shape}")
    out_data = np.asarray(a.data @ b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return Tensor._result(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add expects equal shapes, got {a.shape}, {b.shape}")
    out_data = a.data + b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return Tensor._result(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul expects equal shapes, got {a.shape}, {b.shape}")
    out_data = a.data * b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return Tensor._result(out_data, (a, b), backward)


def affine(a: Tensor, mul_by: float | np.ndarray, add_to: float | np.ndarray = 0.0) -> Tensor:
    """Elementwise ``a * mul_by + add_to`` with constant coefficients."""
    coeff = np.asarray(mul_by, dtype=np.float64)
    out_data = a.data * coeff + np.asarray(add_to, dtype=np.float64)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * coeff)

    return Tensor._result(out_data, (a,), backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * (x.data > 0.0))

    return Tensor._result(out_data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                        np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._result(out_data, (x,), backward)


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g / x.data)

    return Tensor._result(out_data, (x,), backward)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(x.data, lo, hi)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            inside = (x.data > lo) & (x.data < hi)
            x._accumulate(g * inside)

    return Tensor._result(out_data, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(np.sum(x.data))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g)))

    return Tensor._result(out_data, (x,), backward)


def take(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather entries of a 1-d tensor at the given indices."""
    if x.data.ndim != 1:
        raise DimensionError("take expects a 1-d tensor")
    idx = np.asarray(indices, dtype=np.intp)
    out_data = x.data[idx]

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, idx, g)
            x._accumulate(full)

    return Tensor._result(out_data, (x,), backward)


def concat(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise DimensionError("concat needs at least one part")
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError("concat expects 1-d tensors")
    sizes = [p.data.shape[0] for p in parts]
    out_data = np.concatenate([p.data for p in parts])
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[start:stop])

    return Tensor._result(out_data, tuple(parts), backward)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal length into an (n, d) tensor."""
    if not rows:
        raise DimensionError("stack_rows needs at least one row")
    d = rows[0].data.shape
    for r in rows:
        if r.data.ndim != 1 or r.data.shape != d:
            raise DimensionError("stack_rows expects equal-length vectors")
    out_data = np.stack([r.data for r in rows], axis=0)

    def backward(g: np.ndarray) -> None:
        for m, r in enumerate(rows):
            if r.requires_grad:
                r._accumulate(g[m])

    return Tensor._result(out_data, tuple(rows), backward)


def stack_scalars(items: Sequence[Tensor]) -> Tensor:
    if not items:
        raise DimensionError("stack_scalars needs at least one item")
    for s in items:
        if s.data.shape != ():
            raise DimensionError("stack_scalars expects scalar tensors")
    out_data = np.array([s.data for s in items], dtype=np.float64)

    def backward(g: np.ndarray) -> None:
        for m, s in enumerate(items):
            if s.requires_grad:
                s._accumulate(np.asarray(g[m]))

    return Tensor._result(out_data, tuple(items), backward)


def flatten(x: Tensor) -> Tensor:
    out_data = x.data.reshape(-1)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return Tensor._result(out_data, (x,), backward)


def weighted_sum_rows(rows: Tensor, weights: Tensor) -> Tensor:
    """Combine the rows of an (n, d) tensor with weights (n,) into (d,).

    The per-coordinate accumulation is value-sorted, so the result depends
    only on the multiset of weighted rows and not on their order.
    """
    if rows.data.ndim != 2 or weights.data.ndim != 1:
        raise DimensionError("weighted_sum_rows expects (n,d) rows and (n,) weights")
    if rows.data.shape[0] != weights.data.shape[0]:
        raise DimensionError("row count and weight count disagree")
    out_data = _canonical_sum(weights.data[:, None] * rows.data, axis=0)

    def backward(g: np.ndarray) -> None:
        if rows.requires_grad:
            rows._accumulate(weights.data[:, None] * g[None, :])
        if weights.requires_grad:
            weights._accumulate(rows.data @ g)

    return Tensor._result(out_data, (rows, weights), backward)


def softmax(u: Tensor) -> Tensor:
    """Numerically stable softmax of a 1-d tensor (max-subtraction)."""
    if u.data.ndim != 1 or u.data.shape[0] == 0:
        raise DimensionError("softmax expects a non-empty 1-d tensor")
    shifted = u.data - np.max(u.data)
    e = np.exp(shifted)
    z = _canonical_sum(e)
    out_data = e / z

    def backward(g: np.ndarray) -> None:
        if u.requires_grad:
            inner = float(g @ out_data)
            u._accumulate(out_data * (g - inner))

    return Tensor._result(out_data, (u,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize a 1-d tensor to zero mean / unit variance, then apply affine.

    Uses the population (biased) variance over the d entries.
    """
    if x.data.ndim != 1 or x.data.shape[0] < 1:
        raise DimensionError("layer_norm expects a non-empty 1-d tensor")
    if gain.data.shape != x.data.shape or bias.data.shape != x.data.shape:
        raise DimensionError("layer_norm gain/bias must match the input shape")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    d = x.data.shape[0]
    mean = np.mean(x.data)
    var = np.mean((x.data - mean) ** 2)
    inv_std = 1.0 / math.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out_data = gain.data * xhat + bias.data

    def backward(g: np.ndarray) -> None:
        if gain.requires_grad:
            gain._accumulate(g * xhat)
        if bias.requires_grad:
            bias._accumulate(g)
        if x.requires_grad:
            dxhat = g * gain.data
            dx = inv_std * (dxhat - np.mean(dxhat) - xhat * np.mean(dxhat * xhat))
            x._accumulate(dx)

    return Tensor._result(out_data, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# convolution and pooling (valid cross-correlation, stride 1; 2x2 max pool)


def _windows(data: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (C, H, W) -> (C, H-kh+1, W-kw+1, kh, kw) view
    return np.lib.stride_tricks.sliding_window_view(data, (kh, kw), axis=(1, 2))


def conv2d_valid(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid cross-correlation of (C_in,H,W) with (C_out,C_in,kh,kw) kernels."""
    if x.data.ndim != 3 or kernels.data.ndim != 4:
        raise DimensionError("conv2d_valid expects (C,H,W) input and (O,C,kh,kw) kernels")
    c_in, h, w = x.data.shape
    c_out, k_in, kh, kw = kernels.data.shape
    if k_in != c_in:
        raise DimensionError(f"kernel input channels {k_in} != input channels {c_in}")
    if bias.data.shape != (c_out,):
        raise DimensionError("bias must have one entry per output channel")
    if h < kh or w < kw:
        raise DimensionError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
    win = _windows(x.data, kh, kw)
    out_data = np.einsum("cijuv,ocuv->oij", win, kernels.data) + bias.data[:, None, None]

    def backward(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))
        if kernels.requires_grad:
            kernels._accumulate(np.einsum("cijuv,oij->ocuv", win, g))
        if x.requires_grad:
            padded = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gwin = _windows(padded, kh, kw)
            flipped = kernels.data[:, :, ::-1, ::-1]
            x._accumulate(np.einsum("oyxuv,ocuv->cyx", gwin, flipped))

    return Tensor._result(out_data, (x, kernels, bias), backward)


def maxpool2(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling over (C,H,W); H and W must be even."""
    if x.data.ndim != 3:
        raise DimensionError("maxpool2 expects a (C,H,W) tensor")
    c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 needs even extents, got {h}x{w}")
    tiles = x.data.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    tiles = tiles.reshape(c, h // 2, w // 2, 4)
    argmax = tiles.argmax(axis=-1)  # first max wins; deterministic tie rule
    out_data = np.take_along_axis(tiles, argmax[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            gt = np.zeros_like(tiles)
            np.put_along_axis(gt, argmax[..., None], g[..., None], axis=-1)
            gt = gt.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4)
            x._accumulate(gt.reshape(c, h, w))

    return Tensor._result(out_data, (x,), backward)


# ---------------------------------------------------------------------------
# gradient verification


@dataclass(frozen=True)
class GradCheckReport:
    """Worst relative disagreement between analytic and numeric gradients."""

    max_relative_error: float
    parameter_count: int


def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Tensor],
                      h: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must rebuild its computation from ``params`` on every call and
    return a scalar tensor. Relative error uses the denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data):
        raise NumericError("finite_diff_check: loss is not finite")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    count = 0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            flat[i] = orig - h
            down = float(f().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("finite_diff_check: perturbed loss is not finite")
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
            count += 1
    return GradCheckReport(max_relative_error=worst, parameter_count=count)
