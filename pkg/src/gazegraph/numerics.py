"""Dense float64 tensors with reverse-mode differentiation and Adam.

Every op returns a new :class:`Tensor` that remembers its parents and a
vector-Jacobian closure. ``backward`` walks that record in reverse
topological order, so each loss owns its own tape and independent training
contexts never share mutable state.
"""
from __future__ import annotations

import io
import warnings
import zipfile
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError, FormatError, NumericError

CHECKPOINT_FORMAT = "gazegraph-checkpoint"
CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "_parents", "_vjp", "requires_grad")

    def __init__(self, data, parents: tuple = (), vjp: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self._parents = parents
        self._vjp = vjp
        self.requires_grad = any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, data={np.array2string(self.data, threshold=8)})"

    # operator sugar
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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Param(Tensor):
    """Trainable leaf tensor; ``grad`` accumulates across backward calls."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=np.float64))
        self.name = name
        self.requires_grad = True
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product of a (m, k) and b (k, n); 1-D operands are not promoted."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad
    return Tensor(ad @ bd, (a, b), lambda g: (g @ bd.T if need_a else None, ad.T @ g if need_b else None))


def batched_matvec(mats, vecs) -> Tensor:
    """Row-wise products: mats (n, p, q) times vecs (n, q) -> (n, p)."""
    mats, vecs = as_tensor(mats), as_tensor(vecs)
    if mats.data.ndim != 3 or vecs.data.ndim != 2 or mats.shape[0] != vecs.shape[0] or mats.shape[2] != vecs.shape[1]:
        raise DimensionError(f"batched_matvec: cannot apply {mats.shape} to {vecs.shape}")
    md, vd = mats.data, vecs.data
    out = np.matmul(md, vd[:, :, None])[:, :, 0]
    need_m, need_v = mats.requires_grad, vecs.requires_grad

    def vjp(g):
        gm = g[:, :, None] * vd[:, None, :] if need_m else None
        gv = np.matmul(g[:, None, :], md)[:, 0, :] if need_v else None
        return gm, gv

    return Tensor(out, (mats, vecs), vjp)


# ---------------------------------------------------------------------------
# pointwise
# ---------------------------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat: no inputs")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor(out, tuple(ts), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {shape}") from None
    return Tensor(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation of {a.data.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return Tensor(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def slice_last(a, start: int, stop: int) -> Tensor:
    """a[..., start:stop]"""
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return Tensor(a.data[..., start:stop], (a,), vjp)


def take_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def vjp(g):
        return (_kernels.segment_sum(g.reshape(len(idx), -1), idx, n).reshape((n,) + a.shape[1:]),)

    return Tensor(a.data[idx], (a,), vjp)


def segment_sum(a, seg, n_seg: int) -> Tensor:
    """Sum rows of a 2-D tensor into ``n_seg`` buckets given by ``seg``."""
    a = as_tensor(a)
    if a.data.ndim != 2 or len(seg) != a.shape[0]:
        raise DimensionError(f"segment_sum: {a.shape} rows vs {len(seg)} segment ids")
    seg = np.asarray(seg, dtype=np.int64)
    out = _kernels.segment_sum(a.data, seg, n_seg)
    return Tensor(out, (a,), lambda g: (g[seg],))


def segment_mean(a, seg, n_seg: int) -> Tensor:
    seg = np.asarray(seg, dtype=np.int64)
    counts = np.bincount(seg, minlength=n_seg).astype(np.float64)
    if np.any(counts == 0):
        raise ContractError("segment_mean: empty segment")
    return mul(segment_sum(a, seg, n_seg), (1.0 / counts)[:, None])


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return Tensor(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a, axis: int | None = None) -> Tensor:
    """Mean over ``axis`` (all entries when None)."""
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        n = a.size
        return Tensor(a.data.mean(), (a,), lambda g: (np.full(shape, g / n),))
    n = shape[axis]
    out = a.data.mean(axis=axis)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return Tensor(out, (a,), vjp)


def l2norm(a) -> Tensor:
    """Normalise along the last axis. Zero rows stay zero, with a warning."""
    a = as_tensor(a)
    x = a.data
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    zero = norms == 0
    if np.any(zero):
        warnings.warn("l2norm of a zero vector; returning zeros", RuntimeWarning, stacklevel=2)
    safe = np.where(zero, 1.0, norms)
    y = np.where(zero, 0.0, x / safe)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (np.where(zero, 0.0, (g - y * dot) / safe),)

    return Tensor(y, (a,), vjp)


def lstm_cell(gates, c_prev) -> Tensor:
    """Fused LSTM update from pre-activation gates (B, 4h) in i, f, g, o order.

    Returns the (B, 2h) concatenation [h_new, c_new].
    """
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    z, c0 = gates.data, c_prev.data
    h = c0.shape[-1]
    if z.shape[-1] != 4 * h or z.shape[:-1] != c0.shape[:-1]:
        raise DimensionError(f"lstm_cell: gates {z.shape} do not match cell state {c0.shape}")
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    i, f, o = sig[:, :h], sig[:, h:2 * h], sig[:, 3 * h:]
    g = np.tanh(z[:, 2 * h:3 * h])
    c = f * c0 + i * g
    tc = np.tanh(c)
    out = np.concatenate([o * tc, c], axis=1)

    def vjp(grad):
        gh, gc = grad[:, :h], grad[:, h:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.empty_like(z)
        dz[:, :h] = dc * g * i * (1.0 - i)
        dz[:, h:2 * h] = dc * c0 * f * (1.0 - f)
        dz[:, 2 * h:3 * h] = dc * i * (1.0 - g * g)
        dz[:, 3 * h:] = gh * tc * o * (1.0 - o)
        return dz, dc * f

    return Tensor(out, (gates, c_prev), vjp)


ELEMENTWISE = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "add": add,
    "mul": mul,
    "concat": concat,
    "mean": mean,
    "l2norm": l2norm,
}


def elementwise(op: str, *inputs, **kwargs) -> Tensor:
    """Dispatch by name; ``concat`` takes the tensors as positional args."""
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    if op == "concat":
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Weighted sum over rows of -log softmax(logits)[row, target]."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy: expected (rows, classes) logits, got {logits.shape}")
    rows, n_cls = logits.shape
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != rows:
        raise DimensionError(f"cross_entropy: {rows} rows but {targets.shape[0]} targets")
    bad = (targets < 0) | (targets >= n_cls)
    if np.any(bad):
        raise IndexError(f"target class {int(targets[bad][0])} outside [0, {n_cls})")
    w = np.ones(rows) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    logp = _log_softmax(logits.data)
    picked = logp[np.arange(rows), targets]
    loss = -(w * picked).sum()

    def vjp(g):
        grad = np.exp(logp)
        grad[np.arange(rows), targets] -= 1.0
        return (g * w[:, None] * grad,)

    return Tensor(loss, (logits,), vjp)


def softmax_cross_entropy(logits, target_class: int) -> Tensor:
    """-log softmax(logits)[target] for a single logit vector."""
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise DimensionError(f"softmax_cross_entropy: expected a vector, got {logits.shape}")
    return cross_entropy(reshape(logits, (1, -1)), [target_class])


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(np.asarray(z, dtype=np.float64)))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``grad`` of every reachable Param."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Param):
            node.grad = node.grad + g
            continue
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: Iterable[Param]) -> None:
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {p.name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise DimensionError(f"Adam moment for {p.name!r} has shape {m.shape}, parameter {p.shape}")
        v = state.v[p.name]
        m = state.beta1 * m + (1.0 - state.beta1) * p.grad
        v = state.beta2 * v + (1.0 - state.beta2) * (p.grad * p.grad)
        state.m[p.name] = m
        state.v[p.name] = v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: Iterable[Param], meta: dict | None = None) -> None:
    """Write a versioned .npz; zip entry timestamps are pinned so equal params give equal bytes."""
    import json

    params = list(params)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "names": [p.name for p in params],
        "shapes": [list(p.shape) for p in params],
        "meta": meta or {},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("header.json", date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, json.dumps(header, sort_keys=True))
        for i, p in enumerate(params):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(p.data), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"param_{i:04d}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def load_checkpoint(path, params: Iterable[Param] | None = None) -> tuple[dict, dict]:
    """Read a checkpoint. If ``params`` is given, copy values in after validating names and shapes.

    Returns ``(arrays_by_name, meta)``.
    """
    import json

    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            if header.get("format") != CHECKPOINT_FORMAT:
                raise FormatError(f"{path}: not a gazegraph checkpoint")
            if header.get("version") != CHECKPOINT_VERSION:
                raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
            arrays = {}
            for i, (name, shape) in enumerate(zip(header["names"], header["shapes"])):
                arr = np.load(io.BytesIO(zf.read(f"param_{i:04d}.npy")), allow_pickle=False)
                if list(arr.shape) != list(shape):
                    raise FormatError(f"{path}: tensor {name!r} stored as {arr.shape}, header says {shape}")
                arrays[name] = arr
    except (zipfile.BadZipFile, KeyError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint ({exc})") from None
    if params is not None:
        params = list(params)
        expected = {p.name for p in params}
        if expected != set(arrays):
            missing = sorted(expected - set(arrays))
            extra = sorted(set(arrays) - expected)
            raise FormatError(f"checkpoint names disagree with model: missing={missing} extra={extra}")
        for p in params:
            if arrays[p.name].shape != p.shape:
                raise FormatError(f"checkpoint tensor {p.name!r} has shape {arrays[p.name].shape}, model expects {p.shape}")
            p.data = arrays[p.name].astype(np.float64)
            p.zero_grad()
    return arrays, header.get("meta", {})


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def numerical_grad(loss_fn: Callable[[], Tensor], param: Param, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``param``."""
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn().item()
        flat[i] = orig - h
        down = loss_fn().item()
        flat[i] = orig
        out.reshape(-1)[i] = (up - down) / (2.0 * h)
    return out


def gradcheck(loss_fn: Callable[[], Tensor], params: Sequence[Param], h: float = 1e-5) -> dict:
    """Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) per parameter.

    Parameters whose both gradients vanish report 0.
    """
    zero_grad(params)
    backward(loss_fn())
    errors = {}
    for p in params:
        analytic = p.grad.copy()
        numeric = numerical_grad(loss_fn, p, h)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        errors[p.name] = 0.0 if denom < 1e-12 else float(np.linalg.norm(analytic - numeric) / denom)
    zero_grad(params)
    return errors
