"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Only the operations the question-generation model needs are provided.
Every op returns a new :class:`Tensor`; when gradient recording is enabled
and any input requires a gradient, the output remembers its parents and a
closure mapping the output gradient to per-parent gradients.  Calling
:meth:`Tensor.backward` on a scalar walks that record in reverse
topological order.

Broadcasting is deliberately narrow: binary ops accept same-shape operands
or a scalar on either side.  Row-wise bias addition goes through the
explicit :func:`expand` op.
"""

from __future__ import annotations

import contextlib
import json
import zipfile
from pathlib import Path

import numpy as np

DEFAULT_DTYPE = np.float64
CHECKPOINT_FORMAT_VERSION = 1

_state = {"grad_enabled": True, "check_finite": True}


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, decoding)."""
    prev = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = prev


def grad_enabled():
    return _state["grad_enabled"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._parents = ()
        self._backward = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def values(self):
        return self.data.reshape(-1)

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    # -- reverse mode --------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Leaf gradients accumulate across calls until zeroed explicitly;
        intermediate nodes get their gradient overwritten.
        """
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topological(self)
        grads = {id(self): np.ones_like(self.data)}
        owned = set()
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                _accumulate(grads, owned, parent, pg)


class _SliceGrad:
    """Gradient that is zero except on ``index``; avoids dense temporaries."""
    __slots__ = ("index", "value")

    def __init__(self, index, value):
        self.index = index
        self.value = value


def _accumulate(grads, owned, parent, pg):
    key = id(parent)
    cur = grads.get(key)
    if isinstance(pg, _SliceGrad):
        if cur is None or key not in owned:
            base = np.zeros(parent.shape, dtype=pg.value.dtype) if cur is None else cur.copy()
            grads[key] = cur = base
            owned.add(key)
        cur[pg.index] += pg.value
    elif cur is None:
        grads[key] = pg
    elif key in owned:
        cur += pg
    else:
        grads[key] = cur + pg
        owned.add(key)


def _not_scalar(t):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def parameter(data, name=None, trainable=True):
    t = Tensor(np.ascontiguousarray(data), requires_grad=trainable, name=name)
    t.grad = np.zeros_like(t.data)
    return t


def constant(data, dtype=None):
    return Tensor(data, dtype=dtype)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, backward):
    if _state["check_finite"] and not np.isfinite(data).all():
        raise NonFiniteError("non-finite value produced by forward op")
    out = Tensor(data)
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# binary elementwise

def _check_binary(a, b, opname):
    if a.shape == b.shape or a.size == 1 and a.data.ndim <= b.data.ndim \
            or b.size == 1 and b.data.ndim <= a.data.ndim:
        return
    raise DimensionError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_binary(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _reduce_to(g, sa), _reduce_to(g, sb)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_binary(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _reduce_to(g, sa), _reduce_to(-g, sb)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_binary(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _reduce_to(g * bd, ad.shape), _reduce_to(g * ad, bd.shape)

    return _result(ad * bd, (a, b), backward)


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_binary(a, b, "div")
    ad, bd = a.data, b.data
    if np.any(bd == 0):
        raise DomainError("division by zero")

    def backward(g):
        return _reduce_to(g / bd, ad.shape), _reduce_to(-g * ad / (bd * bd), bd.shape)

    return _result(ad / bd, (a, b), backward)


# ---------------------------------------------------------------------------
# unary elementwise

def neg(x):
    return _result(-x.data, (x,), lambda g: (-g,))


def tanh(x):
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    d = x.data
    # split by sign so exp never overflows
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x):
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,))


def log(x):
    d = x.data
    if np.any(d <= 0):
        raise DomainError(f"log of non-positive value (min {d.min()!r})")
    return _result(np.log(d), (x,), lambda g: (g / d,))


def sqrt(x):
    d = x.data
    if np.any(d < 0):
        raise DomainError(f"sqrt of negative value (min {d.min()!r})")
    y = np.sqrt(d)
    return _result(y, (x,), lambda g: (g * 0.5 / y,))


# ---------------------------------------------------------------------------
# linear algebra and reductions

def matmul(a, b):
    """2-D matrix product, or batched product of two 3-D stacks."""
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim or ad.ndim not in (2, 3):
        raise DimensionError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if ad.shape[-1] != bd.shape[-2] or ad.ndim == 3 and ad.shape[0] != bd.shape[0]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        bt = bd.T if bd.ndim == 2 else np.swapaxes(bd, 1, 2)
        at = ad.T if ad.ndim == 2 else np.swapaxes(ad, 1, 2)
        return (g @ bt if a.requires_grad else None,
                at @ g if b.requires_grad else None)

    return _result(ad @ bd, (a, b), backward)


def tsum(x, axis=None, keepdims=False):
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x):
    return mul(tsum(x), 1.0 / x.size)


def softmax(x, axis=-1, mask=None):
    """Stable softmax; positions where ``mask`` is False get exactly zero weight."""
    d = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=axis).all():
            raise ContractError("softmax: every position masked along the reduced axis")
        d = np.where(mask, d, -np.inf)
    z = d - np.max(d, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result(y, (x,), backward)


# ---------------------------------------------------------------------------
# shape manipulation

def concat(tensors, axis=-1):
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise DimensionError(
                f"concat: non-axis dims differ: {[u.shape for u in tensors]}")
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = list(tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def getitem(x, idx):
    """Basic (slice/integer) indexing only; fancy indexing would break the sparse gradient."""

    def backward(g):
        return (_SliceGrad(idx, g),)

    return _result(x.data[idx], (x,), backward)


def reshape(x, shape):
    orig = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def expand(x, shape):
    """Broadcast ``x`` to ``shape`` explicitly (size-1 or missing leading dims)."""
    shape = tuple(shape)
    orig = x.shape
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError(f"expand: cannot broadcast {orig} to {shape}") from None
    lead = len(shape) - len(orig)

    def backward(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(orig) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return _result(out, (x,), backward)


# ---------------------------------------------------------------------------
# lookups

def embedding_lookup(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"embedding_lookup: id out of range [0, {n}): "
                         f"min {ids.min()}, max {ids.max()}")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(table.data[ids], (table,), backward)


def pick(x, idx):
    """Select ``x[b, idx[b]]`` for every row of a 2-D tensor."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])
    shape = x.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[rows, idx] = g
        return (out,)

    return _result(x.data[rows, idx], (x,), backward)


def dropout(x, rate, training, rng):
    """Inverted dropout: scale kept units by 1/(1-rate) in training mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# verification, initialisation and optimisation

def grad_check(f, inputs, eps=1e-5):
    """Largest relative disagreement between backprop and central differences.

    ``f(*inputs)`` must return a scalar tensor and be deterministic.
    """
    for t in inputs:
        t.grad = np.zeros_like(t.data)
    f(*inputs).backward()
    analytic = [t.grad.copy() for t in inputs]
    worst = 0.0
    with no_grad():
        for t, a in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            assert np.shares_memory(flat, t.data)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = f(*inputs).item()
                flat[i] = orig - eps
                fm = f(*inputs).item()
                flat[i] = orig
                num = (fp - fm) / (2.0 * eps)
                an = a.reshape(-1)[i]
                err = abs(an - num) / max(abs(an), abs(num), 1e-8)
                worst = max(worst, err)
    return worst


def glorot_init(shape, rng, dtype=DEFAULT_DTYPE):
    shape = tuple(shape)
    if len(shape) < 2:
        raise DimensionError(f"glorot_init needs at least 2 dims, got {shape}")
    fan_in, fan_out = shape[-2], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def zero_grads(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))


def clip_gradients(grads, max_norm):
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def sgd_step(params, grads, lr):
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if lr == 0:
        return
    for p, g in zip(params, grads):
        p.data -= lr * g


# ---------------------------------------------------------------------------
# checkpoint container
#
# A checkpoint is a zip archive (numpy .npz layout).  Each named tensor is a
# ``<name>.npy`` member holding shape, dtype and row-major values.  The
# reserved member ``__meta__.npy`` is a uint8 array of UTF-8 JSON with at
# least ``{"format_version": int}``.  No pickled objects are stored.

def save_tensors(path, tensors, meta=None):
    meta = dict(meta or {})
    meta["format_version"] = CHECKPOINT_FORMAT_VERSION
    if "__meta__" in tensors:
        raise ValueError("'__meta__' is reserved")
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    arrays = {k: np.ascontiguousarray(v) for k, v in tensors.items()}
    path = Path(path)
    # an npz container written by hand so entry timestamps are fixed and files reproducible
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in [("__meta__", blob)] + sorted(arrays.items()):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, arr, allow_pickle=False)
    return path


def load_tensors(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["__meta__"]).decode("utf-8"))
            tensors = {k: z[k] for k in z.files if k != "__meta__"}
    except (zipfile.BadZipFile, KeyError) as exc:
        raise ValueError(f"{path}: not a checkpoint container ({exc})") from None
    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version!r}")
    return tensors, meta
