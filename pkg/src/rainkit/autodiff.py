"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the U-Net needs are provided: 3x3 (or any odd-size)
same-padded convolution, 2x2 max pooling, 2x2 stride-2 transposed
convolution, relu, channel concatenation, the summed L1 loss and half the
squared L2 norm.  Tensors are laid out (batch, channel, height, width).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        g = g.astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Back-propagate from this tensor; a scalar output seeds with 1."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node._accumulate(g)
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not _needs_grad(parent):
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(_needs_grad(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# convolutions


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, H, W) padded by k//2 -> (N, H, W, C, k, k) sliding windows."""
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # N, C, H, W, k, k
    return win.transpose(0, 2, 3, 1, 4, 5)


def _conv_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    cols = _windows(x, k).reshape(n * h * wd, c * k * k)
    out = cols @ w.reshape(o, c * k * k).T
    return out.reshape(n, h, wd, o).transpose(0, 3, 1, 2)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 cross-correlation with zero 'same' padding; kernel is (out, in, k, k), k odd."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, wd = x.data, kernel.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ValueError("conv2d expects (N, C, H, W) input and (O, C, k, k) kernel")
    if xd.shape[1] != wd.shape[1]:
        raise ValueError(f"input has {xd.shape[1]} channels, kernel expects {wd.shape[1]}")
    k = wd.shape[2]
    if wd.shape[3] != k or k % 2 == 0:
        raise ValueError("kernel must be square with odd size")
    out = _conv_same(xd, wd)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (wd.shape[0],):
            raise ValueError("bias length must equal output channels")
        out = out + bias.data.reshape(1, -1, 1, 1)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        n, o, h, w_ = g.shape
        c = xd.shape[1]
        gx = _conv_same(g, np.flip(wd, axis=(2, 3)).transpose(1, 0, 2, 3)) if _needs_grad(x) else None
        gw = None
        if _needs_grad(kernel):
            cols = _windows(xd, k).reshape(n * h * w_, c * k * k)
            g2 = g.transpose(0, 2, 3, 1).reshape(n * h * w_, o)
            gw = (g2.T @ cols).reshape(wd.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return _result(out, parents, backward)


def tconv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """2x2 stride-2 transposed convolution; kernel is (in, out, 2, 2). Doubles H and W."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, wd = x.data, kernel.data
    if xd.ndim != 4 or wd.ndim != 4 or wd.shape[2:] != (2, 2):
        raise ValueError("tconv2d expects (N, C, H, W) input and (C, O, 2, 2) kernel")
    if xd.shape[1] != wd.shape[0]:
        raise ValueError(f"input has {xd.shape[1]} channels, kernel expects {wd.shape[0]}")
    n, c, h, w_ = xd.shape
    o = wd.shape[1]
    # out[n, o, h, a, w, b] = sum_c x[n, c, h, w] * K[c, o, a, b]
    flat = xd.transpose(0, 2, 3, 1).reshape(n * h * w_, c) @ wd.reshape(c, o * 4)
    out = flat.reshape(n, h, w_, o, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(n, o, 2 * h, 2 * w_)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (o,):
            raise ValueError("bias length must equal output channels")
        out = out + bias.data.reshape(1, -1, 1, 1)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        g6 = g.reshape(n, o, h, 2, w_, 2).transpose(0, 2, 4, 1, 3, 5).reshape(n * h * w_, o * 4)
        gx = gw = None
        if _needs_grad(x):
            gx = (g6 @ wd.reshape(c, o * 4).T).reshape(n, h, w_, c).transpose(0, 3, 1, 2)
        if _needs_grad(kernel):
            gw = (xd.transpose(0, 2, 3, 1).reshape(n * h * w_, c).T @ g6).reshape(wd.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return _result(out, parents, backward)


# ---------------------------------------------------------------------------
# pooling, nonlinearity, concatenation


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2. Gradient goes to the first maximum in row-major order."""
    x = as_tensor(x)
    xd = x.data
    n, c, h, w_ = xd.shape
    if h % 2 or w_ % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w_}")
    blocks = xd.reshape(n, c, h // 2, 2, w_ // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w_ // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w_ // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w_)
        return [gx]

    return _result(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: [g * mask])


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(f"cannot concatenate {a.data.shape} and {b.data.shape} along channels")
    ca = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return _result(out, (a, b), lambda g: [g[:, :ca], g[:, ca:]])


def mul_channels(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply each input channel by a constant (the channel mask of the importance sampler)."""
    x = as_tensor(x)
    m = np.asarray(mask, dtype=x.data.dtype).reshape(1, -1, 1, 1)
    if m.shape[1] != x.data.shape[1]:
        raise ValueError(f"mask has {m.shape[1]} entries, input has {x.data.shape[1]} channels")
    return _result(x.data * m, (x,), lambda g: [g * m])


# ---------------------------------------------------------------------------
# losses (accumulated in float64)


def l1_loss(pred: Tensor, target) -> Tensor:
    """Sum of absolute differences. Subgradient at exact ties is 0."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if pred.data.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {target.shape}")
    diff = pred.data.astype(np.float64) - target.astype(np.float64)
    out = np.array(np.abs(diff).sum())
    sign = np.sign(diff)
    return _result(out, (pred,), lambda g: [g * sign])


def half_sq_norm(x: Tensor) -> Tensor:
    x = as_tensor(x)
    xd = x.data.astype(np.float64)
    return _result(np.array(0.5 * np.sum(xd * xd)), (x,), lambda g: [g * xd])


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_error: float
    checked: int
    skipped: int  # coordinates whose +-eps perturbation crossed a tie point


def grad_check_report(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    wrt: Iterable[int] | None = None,
    eps: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    tie_tol: float | None = None,
) -> GradCheckReport:
    """Compare reverse-mode and central-difference gradients entry by entry.

    ``fn`` maps Tensors to a scalar Tensor; inputs are promoted to float64.
    The relative error of each entry is ``|a - n| / max(|a|, |n|, 1e-3)``
    where ``a`` is the analytic and ``n`` the numeric derivative.  With
    ``max_entries`` only a random subset of coordinates per input is perturbed.

    With ``tie_tol`` set, a coordinate is skipped when its forward and
    backward one-sided slopes differ by more than ``tie_tol`` relative:
    the perturbation then straddles a relu, max-pool or L1 kink, where no
    derivative exists to compare against.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    wrt = list(range(len(arrays))) if wrt is None else list(wrt)
    tensors = [Tensor(a, requires_grad=(i in wrt)) for i, a in enumerate(arrays)]
    out = fn(*tensors)
    out.backward()
    f0 = float(out.data)
    rng = rng or np.random.default_rng(0)
    worst, checked, skipped = 0.0, 0, 0
    for i in wrt:
        analytic = tensors[i].grad
        if analytic is None:
            analytic = np.zeros_like(arrays[i])
        flat_idx = np.arange(arrays[i].size)
        if max_entries is not None and flat_idx.size > max_entries:
            flat_idx = rng.choice(flat_idx, size=max_entries, replace=False)
        for j in flat_idx:
            pos = np.unravel_index(j, arrays[i].shape)
            orig = arrays[i][pos]
            arrays[i][pos] = orig + eps
            f_plus = float(fn(*[Tensor(a) for a in arrays]).data)
            arrays[i][pos] = orig - eps
            f_minus = float(fn(*[Tensor(a) for a in arrays]).data)
            arrays[i][pos] = orig
            if tie_tol is not None:
                right, left = (f_plus - f0) / eps, (f0 - f_minus) / eps
                if abs(right - left) > tie_tol * max(abs(right), abs(left), 1e-3):
                    skipped += 1
                    continue
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic[pos]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-3))
            checked += 1
    return GradCheckReport(worst, checked, skipped)


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    wrt: Iterable[int] | None = None,
    eps: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    tie_tol: float | None = None,
) -> float:
    """Max relative gradient error; see :func:`grad_check_report`."""
    return grad_check_report(fn, inputs, wrt, eps, max_entries, rng, tie_tol).max_error
