"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Only the operations the forecasting models need are provided. Values are
float64 numpy arrays that are frozen after construction. Recording happens
on an explicit :class:`Tape`; outside a ``with Tape():`` block every op just
computes its value, which is what inference and finite differencing use.

Typical use::

    params = {"w": Tensor([3.0], name="w", requires_grad=True)}
    with Tape():
        loss = sum_all(mul(params["w"], params["w"]))
    grads = backward(loss, params)    # {"w": array([6.])}
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import NumericError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "TapeNode",
    "backward",
    "add",
    "sub",
    "mul",
    "scale",
    "sum_all",
    "add_bias",
    "matmul",
    "reshape",
    "crop_time",
    "split_channels",
    "causal_conv_time",
    "pointwise_channel_map",
    "relu",
    "sigmoid",
    "glu_residual",
    "mse_loss",
    "finite_difference_check",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Tensor:
    """Immutable float64 array, optionally tracked for gradients.

    Construction from external values copies them and rejects NaN/Inf.
    """

    __slots__ = ("data", "name", "requires_grad", "_tape")

    def __init__(self, values, *, name: str | None = None, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value in tensor {name or ''}".rstrip())
        self.data = _frozen(np.ascontiguousarray(arr))
        self.name = name
        self.requires_grad = requires_grad
        self._tape = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape: "Tape | None" = None) -> "Tensor":
        # internal results skip the finite check; the trainer checks the loss
        t = object.__new__(cls)
        t.data = _frozen(np.ascontiguousarray(arr, dtype=np.float64))
        t.name = None
        t.requires_grad = tape is not None
        t._tape = tape
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


@dataclass
class TapeNode:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


_ACTIVE: list["Tape"] = []


class Tape:
    """Records operations in creation order for one backward pass.

    Nodes are appended as ops run, so the list is already a topological
    order; backward walks it in reverse.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def backward(self, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {}
        if loss._tape is self:
            grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for inp, ig in zip(node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
        out = {}
        for name, p in params.items():
            g = grads.get(id(p))
            out[name] = np.zeros_like(p.data) if g is None else np.array(g, dtype=np.float64)
        # one pass per tape; dropping the nodes breaks the tape <-> output
        # cycle so activations are freed without waiting for the collector
        self.nodes.clear()
        return out


def _record(op: str, inputs: tuple[Tensor, ...], value: np.ndarray, backward_fn) -> Tensor:
    tape = _ACTIVE[-1] if _ACTIVE else None
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor._wrap(value)
    out = Tensor._wrap(value, tape)
    tape.nodes.append(TapeNode(op, inputs, out, backward_fn))
    return out


def backward(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` w.r.t. every tensor in ``params``.

    Parameters the loss does not depend on get zero gradients.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        return {name: np.zeros_like(p.data) for name, p in params.items()}
    return tape.backward(loss, params)


def _same_shape(op: str, *ts: Tensor) -> None:
    first = ts[0].shape
    for t in ts[1:]:
        if t.shape != first:
            raise ShapeError(f"{op}: shape mismatch {first} vs {t.shape}")


# -- elementwise -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _record("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _record("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _record("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record("sum", (a,), np.array(a.data.sum()), lambda g: (np.full(shape, g.item()),))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias along axis 1 (the only broadcast supported)."""
    if x.data.ndim < 2 or bias.shape != (x.shape[1],):
        raise ShapeError(f"add_bias: bias {bias.shape} does not match channels of {x.shape}")
    view = (1, -1) + (1,) * (x.data.ndim - 2)
    axes = (0,) + tuple(range(2, x.data.ndim))
    return _record(
        "add_bias",
        (x, bias),
        x.data + bias.data.reshape(view),
        lambda g: (g, g.sum(axis=axes)),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument never overflows
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0, e) / (1.0 + e)


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _record("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def glu_residual(p: Tensor, q: Tensor, res: Tensor) -> Tensor:
    """Gated linear unit with residual: ``(p + res) * sigmoid(q)``."""
    _same_shape("glu_residual", p, q, res)
    s = _sigmoid(q.data)
    lin = p.data + res.data

    def bw(g):
        gl = g * s
        return gl, g * lin * s * (1.0 - s), gl

    return _record("glu_residual", (p, q, res), lin * s, bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    _same_shape("mse_loss", pred, target)
    diff = pred.data - target.data
    n = diff.size
    value = np.array(np.sum(diff * diff) / n)

    def bw(g):
        gd = (2.0 * g.item() / n) * diff
        return gd, -gd

    return _record("mse", (pred, target), value, bw)


# -- shape ops ---------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape
    try:
        value = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {src} as {shape}") from exc
    return _record("reshape", (x,), value, lambda g: (g.reshape(src),))


def crop_time(x: Tensor, start: int) -> Tensor:
    """Keep time steps ``start:`` of a ``B x C x T x N`` tensor."""
    shape = x.shape
    if not 0 <= start < shape[2]:
        raise ShapeError(f"crop_time: start {start} outside time length {shape[2]}")

    def bw(g):
        full = np.zeros(shape)
        full[:, :, start:, :] = g
        return (full,)

    return _record("crop_time", (x,), x.data[:, :, start:, :], bw)


def split_channels(x: Tensor) -> tuple[Tensor, Tensor]:
    """Split a ``B x 2C x T x N`` tensor into its two channel halves."""
    c2 = x.shape[1]
    if c2 % 2:
        raise ShapeError(f"split_channels: odd channel count {c2}")
    c = c2 // 2
    shape = x.shape

    def bw_first(g):
        full = np.zeros(shape)
        full[:, :c] = g
        return (full,)

    def bw_second(g):
        full = np.zeros(shape)
        full[:, c:] = g
        return (full,)

    first = _record("split_first", (x,), x.data[:, :c], bw_first)
    second = _record("split_second", (x,), x.data[:, c:], bw_second)
    return first, second


# -- linear maps -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _record("matmul", (a, b), ad @ bd, lambda g: (g @ bd.T, ad.T @ g))


def pointwise_channel_map(x: Tensor, w: Tensor) -> Tensor:
    """1x1 convolution: ``out[b,o,t,n] = sum_i w[o,i] x[b,i,t,n]``."""
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[2:] != (1, 1) or w.shape[1] != x.shape[1]:
        raise ShapeError(f"pointwise_channel_map: weight {w.shape} incompatible with input {x.shape}")
    b, c_in, t, n = x.shape
    c_out = w.shape[0]
    x3 = x.data.reshape(b, c_in, t * n)
    w2 = w.data.reshape(c_out, c_in)
    wshape = w.shape
    value = np.matmul(w2, x3).reshape(b, c_out, t, n)

    def bw(g):
        g3 = g.reshape(b, c_out, t * n)
        gx = np.matmul(w2.T, g3).reshape(b, c_in, t, n)
        gw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0).reshape(wshape)
        return gx, gw

    return _record("pointwise", (x, w), value, bw)


def causal_conv_time(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Valid temporal convolution over ``B x C_in x T x N`` inputs.

    ``out[b,c,t,n] = bias[c] + sum_k sum_i w[c,i,k,0] * x[b,i,t+k,n]`` for
    ``t < T - K_t + 1``; each output sees only its own window.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[3] != 1 or w.shape[1] != x.shape[1]:
        raise ShapeError(f"causal_conv_time: weight {w.shape} incompatible with input {x.shape}")
    if bias.shape != (w.shape[0],):
        raise ShapeError(f"causal_conv_time: bias {bias.shape} does not match {w.shape[0]} filters")
    b, c_in, t_in, n = x.shape
    c_out, _, kt, _ = w.shape
    if t_in < kt:
        raise ShapeError(f"causal_conv_time: sequence too short (T={t_in} < K_t={kt})")
    t_out = t_in - kt + 1
    xd = x.data
    # windows[b, i*kt + k, t*n + m] = x[b, i, t+k, m]
    windows = np.stack([xd[:, :, k:k + t_out, :] for k in range(kt)], axis=2).reshape(b, c_in * kt, t_out * n)
    w2 = w.data.reshape(c_out, c_in * kt)
    value = np.matmul(w2, windows).reshape(b, c_out, t_out, n) + bias.data.reshape(1, -1, 1, 1)
    wshape = w.shape

    def bw(g):
        g3 = g.reshape(b, c_out, t_out * n)
        gwin = np.matmul(w2.T, g3).reshape(b, c_in, kt, t_out, n)
        gx = np.zeros(xd.shape)
        for k in range(kt):
            gx[:, :, k:k + t_out, :] += gwin[:, :, k]
        gw = np.matmul(g3, windows.transpose(0, 2, 1)).sum(axis=0).reshape(wshape)
        gb = g3.sum(axis=(0, 2))
        return gx, gw, gb

    return _record("causal_conv", (x, w, bias), value, bw)


# -- gradient oracle ---------------------------------------------------------


def finite_difference_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    max_probes: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between taped gradients and central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    With ``max_probes`` set, at most that many seeded coordinates are probed
    per parameter tensor; otherwise every coordinate is.
    """
    tracked = {k: Tensor(v.data, name=k, requires_grad=True) for k, v in params.items()}
    with Tape():
        loss = f(tracked)
    analytic = backward(loss, tracked)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(params):
        base = params[name].data
        flat_count = base.size
        if max_probes is not None and flat_count > max_probes:
            coords = np.sort(rng.choice(flat_count, size=max_probes, replace=False))
        else:
            coords = np.arange(flat_count)
        grad_flat = analytic[name].reshape(-1)
        for idx in coords:
            vals = []
            for sign in (1.0, -1.0):
                pert = base.copy().reshape(-1)
                pert[idx] += sign * step
                probe = dict(params)
                probe[name] = Tensor(pert.reshape(base.shape))
                vals.append(f(probe).item())
            numeric = (vals[0] - vals[1]) / (2.0 * step)
            err = abs(grad_flat[idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
