"""Dense float64 tensors with reverse-mode differentiation.

Values are plain row-major ``numpy.float64`` arrays.  A :class:`Node` wraps a
value together with its gradient and a record of how it was produced, so that
:func:`backward` can run the chain rule once over the recorded graph in
topological order.  The operation set is fixed (matmul, bias add, tanh,
sigmoid, two-unit maxout, elementwise arithmetic, batch normalization,
row softmax-log and reductions) -- everything the dense nets here need,
and nothing more.

Randomness goes through :func:`make_rng`, a seedable Philox (4x64)
counter-based generator, so runs are reproducible across platforms for a
fixed numpy version.
"""

import numpy as np


def tensor(data):
    """Coerce ``data`` to a C-contiguous float64 array."""
    out = np.asarray(data, dtype=np.float64)
    if out.ndim > 0 and not out.flags.c_contiguous:
        out = np.ascontiguousarray(out)
    return out


def make_rng(seed, stream=0):
    """Named project RNG: Philox 4x64, keyed by (seed, stream).

    Distinct streams derived from one seed (data shuffling, noise draws,
    weight init) never overlap.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def init_weights(rows, cols, seed):
    """Gaussian weight matrix scaled by 1/(sqrt(rows) + sqrt(cols)).

    The divisor is the order of magnitude of the largest singular value of
    a standard Gaussian matrix, so the result has spectral norm O(1).
    """
    if rows < 1 or cols < 1:
        raise ValueError("init_weights needs rows, cols >= 1")
    rng = make_rng(seed)
    w = rng.standard_normal((rows, cols))
    return tensor(w / (np.sqrt(rows) + np.sqrt(cols)))


class Node:
    """A value in the computation graph.

    ``value`` is a float64 array, ``grad`` has the same shape once
    :func:`backward` has run.  Leaf nodes (parameters, constants) have no
    parents; interior nodes carry a vector-Jacobian closure.
    """

    __slots__ = ("value", "grad", "parents", "vjp", "name")

    def __init__(self, value, parents=(), vjp=None, name=None):
        self.value = tensor(value)
        self.grad = None
        self.parents = tuple(parents)
        self.vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or "node"
        return f"Node({tag}, shape={self.value.shape})"


def parameter(value, name=None):
    return Node(value, name=name)


def constant(value):
    return Node(value)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def add(a, b):
    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)
    return Node(a.value + b.value, (a, b), vjp)


def sub(a, b):
    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)
    return Node(a.value - b.value, (a, b), vjp)


def neg(a):
    return Node(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    def vjp(g):
        return (_unbroadcast(g * b.value, a.value.shape),
                _unbroadcast(g * a.value, b.value.shape))
    return Node(a.value * b.value, (a, b), vjp)


def scale(a, k):
    """Multiply by a python scalar ``k``."""
    k = float(k)
    return Node(a.value * k, (a,), lambda g: (g * k,))


def shift(a, k):
    """Add a python scalar ``k``."""
    return Node(a.value + float(k), (a,), lambda g: (g,))


def matmul(a, b):
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul inner extents differ: {a.value.shape} @ {b.value.shape}")

    def vjp(g):
        return g @ b.value.T, a.value.T @ g
    return Node(a.value @ b.value, (a, b), vjp)


def tanh(a):
    out = np.tanh(a.value)
    return Node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    # stable two-branch evaluation
    v = a.value
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                   np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Node(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a):
    out = np.exp(a.value)
    return Node(out, (a,), lambda g: (g * out,))


def log(a):
    return Node(np.log(a.value), (a,), lambda g: (g / a.value,))


def absolute(a):
    # subgradient 0 at the kink
    return Node(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),))


def clamp(a, lo, hi):
    """Clip to [lo, hi]; gradient passes only strictly inside the interval."""
    out = np.clip(a.value, lo, hi)
    inside = (a.value > lo) & (a.value < hi)
    return Node(out, (a,), lambda g: (g * inside,))


def maxout2(a):
    """Two-unit maxout over the last axis: out[..., k] = max of unit pair 2k, 2k+1.

    Ties route the gradient to the lower-index unit.
    """
    v = a.value
    if v.shape[-1] % 2 != 0:
        raise ValueError(f"maxout2 needs an even last extent, got {v.shape}")
    pairs = v.reshape(v.shape[:-1] + (v.shape[-1] // 2, 2))
    take_second = pairs[..., 1] > pairs[..., 0]   # ties pick index 0
    out = np.where(take_second, pairs[..., 1], pairs[..., 0])

    def vjp(g):
        gp = np.zeros_like(pairs)
        gp[..., 1] = np.where(take_second, g, 0.0)
        gp[..., 0] = np.where(take_second, 0.0, g)
        return (gp.reshape(v.shape),)
    return Node(out, (a,), vjp)


def batchnorm(a, eps=1e-8):
    """Per-column de-mean and divide by the root second moment of the batch.

    No learned affine part; the same rule applies in training and testing,
    so outputs depend on the composition of the current batch.
    """
    v = a.value
    if v.ndim != 2 or v.shape[0] < 2:
        raise ValueError("batchnorm expects a [B x K] batch with B >= 2")
    n = v.shape[0]
    centered = v - v.mean(axis=0)
    second = (centered * centered).mean(axis=0)
    inv = 1.0 / np.sqrt(second + eps)
    out = centered * inv

    def vjp(g):
        # d/dx of (x - mean) / sqrt(mean((x-mean)^2) + eps)
        gsum = g.sum(axis=0)
        gdot = (g * out).sum(axis=0)
        return (inv * (g - gsum / n - out * gdot / n),)
    return Node(out, (a,), vjp)


def log_softmax(a):
    """Row-wise log softmax of a [B x C] array."""
    v = a.value
    m = v.max(axis=1, keepdims=True)
    z = v - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)
    return Node(out, (a,), vjp)


def transpose(a):
    return Node(a.value.T, (a,), lambda g: (g.T,))


def take_rows(a, idx):
    """Gather rows of a [B x K] node; gradient scatter-adds back."""
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)
    return Node(a.value[idx], (a,), vjp)


def row_sum(a):
    """Sum over the last axis of a 2-d node, keeping the batch axis."""
    def vjp(g):
        return (np.repeat(g[:, None], a.value.shape[1], axis=1),)
    return Node(a.value.sum(axis=1), (a,), vjp)


def total_sum(a):
    def vjp(g):
        return (np.full_like(a.value, float(g)),)
    return Node(a.value.sum(), (a,), vjp)


def mean_all(a):
    n = a.value.size

    def vjp(g):
        return (np.full_like(a.value, float(g) / n),)
    return Node(a.value.mean(), (a,), vjp)


def dot_rows(a, b):
    """Per-row inner product of two [B x K] nodes -> [B]."""
    def vjp(g):
        return g[:, None] * b.value, g[:, None] * a.value
    return Node((a.value * b.value).sum(axis=1), (a, b), vjp)


def affine(x, w, b):
    """x @ w + b with a broadcast bias row."""
    return add(matmul(x, w), b)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def topo_order(root):
    """Parents-before-children ordering of the graph under ``root``."""
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(node) into ``node.grad`` for every reachable node.

    ``root`` must be scalar-valued.  Each node's vjp runs exactly once.
    Returns the gradient map {node: gradient array}.
    """
    if root.value.ndim != 0 and root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
    order = topo_order(root)
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg.copy() if isinstance(pg, np.ndarray) else np.asarray(pg, dtype=np.float64)
    return {n: n.grad for n in order if n.grad is not None}
