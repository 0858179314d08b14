"""Reverse-mode automatic differentiation over dense numpy arrays.

Small tape-based engine: every primitive returns a Tensor that remembers its
inputs and a closure that propagates the output gradient back to them.
Only the operations the tagger needs are provided, with strict shape checks
and no broadcasting beyond the few documented patterns.

Models train in float32; gradient-check code builds the same model in
float64 by passing dtype="float64" wherever parameters are created. All
randomness (init, dropout) goes through an explicit numpy Generator so runs
are reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, GraphError, LookupIndexError, NonFiniteGradient

FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense array plus an optional same-shape gradient accumulator.

    Leaf tensors created with requires_grad=True are trainable parameters.
    Tensors produced by primitives keep references to their inputs and a
    backward closure; ``backward`` on a scalar loss replays those closures
    in reverse topological order.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_bw")

    def __init__(self, data, requires_grad=False, dtype=None, name=""):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._bw = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> np.ndarray:
        """Plain array view of the value, outside the graph."""
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}{tag})"

    # Operator sugar. Scalar operands must be plain Python numbers.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return add_scalar(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data, parents, bw) -> Tensor:
    """Build an op output wired to the parents that need gradients."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._bw = bw
    else:
        out._parents = ()
        out._bw = None
    return out


def _acc(grads: dict, t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    k = id(t)
    if k in grads:
        grads[k] = grads[k] + g
    else:
        grads[k] = g


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=False)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: (m,k)@(k,n) -> (m,n), or (m,k)@(k,) -> (m,)."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim not in (1, 2) or ad.shape[1] != bd.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {ad.shape} x {bd.shape}")
    out = ad @ bd

    if bd.ndim == 2:

        def bw(g, grads):
            _acc(grads, a, g @ bd.T)
            _acc(grads, b, ad.T @ g)

    else:

        def bw(g, grads):
            _acc(grads, a, np.outer(g, bd))
            _acc(grads, b, ad.T @ g)

    return _result(out, (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Addition: same shape, or (m,n)+(n,) rows, or (m,n)+(m,1) columns."""
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:
        mode = "same"
    elif ad.ndim == 2 and bd.shape == (ad.shape[1],):
        mode = "row"
    elif ad.ndim == 2 and bd.shape == (ad.shape[0], 1):
        mode = "col"
    else:
        raise DimensionError(f"add shapes incompatible: {ad.shape} + {bd.shape}")
    out = ad + bd

    def bw(g, grads):
        _acc(grads, a, g)
        if mode == "same":
            _acc(grads, b, g)
        elif mode == "row":
            _acc(grads, b, g.sum(axis=0))
        else:
            _acc(grads, b, g.sum(axis=1, keepdims=True))

    return _result(out, (a, b), bw)


def add_scalar(a: Tensor, s: float) -> Tensor:
    out = a.data + a.data.dtype.type(s)

    def bw(g, grads):
        _acc(grads, a, g)

    return _result(out, (a,), bw)


def scale(a: Tensor, s: float) -> Tensor:
    s = a.data.dtype.type(s)
    out = a.data * s

    def bw(g, grads):
        _acc(grads, a, g * s)

    return _result(out, (a,), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        raise DimensionError(f"mul shapes differ: {ad.shape} vs {bd.shape}")
    out = ad * bd

    def bw(g, grads):
        _acc(grads, a, g * bd)
        _acc(grads, b, g * ad)

    return _result(out, (a, b), bw)


def tensor_sum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def bw(g, grads):
        if axis is None:
            _acc(grads, a, np.full_like(a.data, 1.0) * g)
        else:
            _acc(grads, a, np.expand_dims(g, axis) * np.ones_like(a.data))

    return _result(out, (a,), bw)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors, returning a scalar tensor."""
    return tensor_sum(mul(a, b))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g, grads):
        _acc(grads, a, g * (1.0 - out * out))

    return _result(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g, grads):
        _acc(grads, a, g * out * (1.0 - out))

    return _result(out, (a,), bw)


def softmax(a: Tensor, axis: int) -> Tensor:
    x = a.data
    if x.shape[axis] == 0:
        raise DimensionError("softmax over empty axis")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g, grads):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _acc(grads, a, out * (g - inner))

    return _result(out, (a,), bw)


def logsumexp(a: Tensor, axis: int) -> Tensor:
    """log(sum(exp(a))) along one axis, max-shifted for stability."""
    x = a.data
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError("logsumexp over empty axis")
    m = x.max(axis=axis, keepdims=True)
    out_keep = m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
    out = np.squeeze(out_keep, axis=axis)

    def bw(g, grads):
        soft = np.exp(x - out_keep)
        _acc(grads, a, np.expand_dims(g, axis) * soft)

    return _result(out, (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    orig = a.data.shape

    def bw(g, grads):
        _acc(grads, a, g.reshape(orig))

    return _result(out, (a,), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.data.shape}")
    out = a.data.T

    def bw(g, grads):
        _acc(grads, a, g.T)

    return _result(out, (a,), bw)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise DimensionError("concat of zero tensors")
    datas = [p.data for p in parts]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]

    def bw(g, grads):
        offset = 0
        for p, size in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + size)
            _acc(grads, p, g[tuple(sl)])
            offset += size

    return _result(out, tuple(parts), bw)


def stack_rows(vectors: list[Tensor]) -> Tensor:
    """Stack n vectors of length d into an (n, d) matrix."""
    if not vectors:
        raise DimensionError("stack_rows of zero vectors")
    out = np.stack([v.data for v in vectors], axis=0)

    def bw(g, grads):
        for i, v in enumerate(vectors):
            _acc(grads, v, g[i])

    return _result(out, tuple(vectors), bw)


def row(a: Tensor, i: int) -> Tensor:
    """Row i of a matrix, as a vector."""
    if a.data.ndim != 2:
        raise DimensionError(f"row() expects a matrix, got shape {a.data.shape}")
    out = a.data[i]

    def bw(g, grads):
        full = np.zeros_like(a.data)
        full[i] = g
        _acc(grads, a, full)

    return _result(out, (a,), bw)


def narrow(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice along axis 0 (1-D or 2-D input)."""
    if not (0 <= start < stop <= a.data.shape[0]):
        raise DimensionError(f"narrow [{start}:{stop}] outside extent {a.data.shape[0]}")
    out = a.data[start:stop]

    def bw(g, grads):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _acc(grads, a, full)

    return _result(out, (a,), bw)


def gather_flat(a: Tensor, indices: np.ndarray) -> Tensor:
    """Pick elements of a by flat (row-major) index; returns a vector."""
    idx = np.asarray(indices, dtype=np.intp)
    flat = a.data.reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= flat.shape[0]):
        raise DimensionError(f"gather index outside 0..{flat.shape[0] - 1}")
    out = flat[idx]

    def bw(g, grads):
        full = np.zeros_like(flat)
        np.add.at(full, idx, g)
        _acc(grads, a, full.reshape(a.data.shape))

    return _result(out, (a,), bw)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of an embedding table; gradient scatter-adds them back."""
    idx = np.asarray(ids, dtype=np.intp)
    n = table.data.shape[0]
    bad = np.nonzero((idx < 0) | (idx >= n))[0]
    if bad.size:
        raise LookupIndexError(
            f"embedding index {int(idx[bad[0]])} outside vocabulary of size {n}"
        )
    out = table.data[idx]

    def bw(g, grads):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _acc(grads, table, full)

    return _result(out, (table,), bw)


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: train mode scales survivors by 1/(1-p); eval is identity."""
    if not 0.0 <= p < 1.0:
        raise DimensionError(f"dropout rate {p} outside [0, 1)")
    if not train or p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype)
    mask = keep / a.data.dtype.type(1.0 - p)
    out = a.data * mask

    def bw(g, grads):
        _acc(grads, a, g * mask)

    return _result(out, (a,), bw)


# ---------------------------------------------------------------------------
# Backward pass and optimizer
# ---------------------------------------------------------------------------


def backward(loss: Tensor):
    """Populate .grad for every requires_grad ancestor of a scalar loss.

    Repeated calls without zeroing accumulate into the same buffers.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any trainable tensor")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        node.grad += g
        if node._bw is not None:
            node._bw(g, grads)


def global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for t in params.values():
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def sgd_step(params: dict[str, Tensor], lr: float, clip_norm: float | None = None):
    """p <- p - lr * grad for every parameter, then zero the gradients.

    Raises NonFiniteGradient naming the first parameter whose gradient
    contains NaN or Inf. Optional global-norm clipping.
    """
    for name, t in params.items():
        if t.grad is not None and not np.isfinite(t.grad).all():
            raise NonFiniteGradient(name)
    factor = 1.0
    if clip_norm is not None:
        norm = global_grad_norm(params)
        if norm > clip_norm:
            factor = clip_norm / norm
    for t in params.values():
        if t.grad is not None:
            t.data -= (lr * factor) * t.grad
        t.grad = None


def zero_grads(params: dict[str, Tensor]):
    for t in params.values():
        t.grad = None


# ---------------------------------------------------------------------------
# Parameter initialization
# ---------------------------------------------------------------------------


def init_weight(rng: np.random.Generator, shape, dtype, name="") -> Tensor:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); fan_in is the last extent."""
    bound = float(np.sqrt(1.0 / shape[-1]))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True, name=name)


def init_embedding(rng: np.random.Generator, shape, dtype, name="") -> Tensor:
    data = rng.uniform(-0.1, 0.1, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True, name=name)


def init_zeros(shape, dtype, name="") -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)
