"""Reverse-mode automatic differentiation on a dense-tensor tape.

The engine records operations on an append-only :class:`Tape` and computes
gradients for *every* node in a single backward sweep, so callers can read
gradients at intermediate activations, not just at leaf parameters. All
values are float64. Any operation that produces a NaN/Inf raises
:class:`NonFiniteError` instead of letting the poison propagate.

A tape is single-writer: build it and run backward on one thread. The
returned gradient arrays are fresh allocations and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NodeId = int


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


@dataclass
class Node:
    op: str
    inputs: tuple[NodeId, ...]
    value: np.ndarray
    meta: dict = field(default_factory=dict)


def _as_f64(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"op '{op}' produced a non-finite value")


# --- op registry ------------------------------------------------------------
#
# forward(input_values, meta) -> output ndarray
# backward(grad_out, input_values, output, meta) -> tuple of per-input grads
#   (None for an input that receives no gradient, e.g. through detach)


def _fw_add(vals, meta):
    a, b = vals
    if a.shape == b.shape:
        return a + b
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return a + b  # row-vector bias broadcast over the batch
    raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not conform")


def _bw_add(g, vals, out, meta):
    a, b = vals
    gb = g if a.shape == b.shape else g.sum(axis=0)
    return g, gb


def _fw_matmul(vals, meta):
    a, b = vals
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    return a @ b


def _bw_matmul(g, vals, out, meta):
    a, b = vals
    return g @ b.T, a.T @ g


def _fw_scale(vals, meta):
    return vals[0] * meta["factor"]


def _bw_scale(g, vals, out, meta):
    return (g * meta["factor"],)


def _fw_negate(vals, meta):
    return -vals[0]


def _bw_negate(g, vals, out, meta):
    return (-g,)


def _fw_concat(vals, meta):
    a, b = vals
    axis = meta["axis"]
    if a.ndim != b.ndim:
        raise ShapeError(f"concat: ranks {a.ndim} and {b.ndim} differ")
    for d in range(a.ndim):
        if d != axis and a.shape[d] != b.shape[d]:
            raise ShapeError(f"concat: shapes {a.shape} and {b.shape} do not conform on axis {d}")
    return np.concatenate([a, b], axis=axis)


def _bw_concat(g, vals, out, meta):
    a, _ = vals
    axis = meta["axis"]
    n = a.shape[axis]
    idx_a = [slice(None)] * g.ndim
    idx_b = [slice(None)] * g.ndim
    idx_a[axis] = slice(0, n)
    idx_b[axis] = slice(n, None)
    return g[tuple(idx_a)].copy(), g[tuple(idx_b)].copy()


def _fw_tanh(vals, meta):
    return np.tanh(vals[0])


def _bw_tanh(g, vals, out, meta):
    return (g * (1.0 - out * out),)


def _fw_relu(vals, meta):
    return np.maximum(vals[0], 0.0)


def _bw_relu(g, vals, out, meta):
    return (g * (vals[0] > 0.0),)


def _fw_log(vals, meta):
    x = vals[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x)


def _bw_log(g, vals, out, meta):
    return (g / vals[0],)


def _softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _fw_softmax(vals, meta):
    return _softmax(vals[0])


def _bw_softmax(g, vals, out, meta):
    inner = (g * out).sum(axis=-1, keepdims=True)
    return (out * (g - inner),)


def _fw_reduce_sum(vals, meta):
    return np.asarray(vals[0].sum())


def _bw_reduce_sum(g, vals, out, meta):
    return (np.broadcast_to(g, vals[0].shape).copy(),)


def _fw_embedding_mean(vals, meta):
    table = vals[0]
    seqs = meta["sequences"]
    if table.ndim != 2:
        raise ShapeError(f"embedding_mean: table must be 2-D, got {table.shape}")
    vocab = table.shape[0]
    out = np.empty((len(seqs), table.shape[1]))
    for i, seq in enumerate(seqs):
        if len(seq) == 0:
            raise ShapeError("embedding_mean: empty token sequence")
        ids = np.asarray(seq)
        if ids.min() < 0 or ids.max() >= vocab:
            raise IndexError(f"embedding_mean: token id out of range [0, {vocab})")
        out[i] = table[ids].mean(axis=0)
    return out


def _bw_embedding_mean(g, vals, out, meta):
    table = vals[0]
    grad = np.zeros_like(table)
    for i, seq in enumerate(meta["sequences"]):
        np.add.at(grad, np.asarray(seq), g[i] / len(seq))
    return (grad,)


def _fw_softmax_xent(vals, meta):
    """Fused softmax + cross-entropy, mean over the batch (log-sum-exp form)."""
    logits, onehot = vals
    if logits.shape != onehot.shape or logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: shapes {logits.shape} vs {onehot.shape}")
    m = logits.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=-1))
    per_sample = lse - (logits * onehot).sum(axis=-1)
    return np.asarray(per_sample.mean())


def _bw_softmax_xent(g, vals, out, meta):
    logits, onehot = vals
    n = logits.shape[0]
    p = _softmax(logits)
    g_logits = g * (p - onehot) / n
    g_onehot = -g * logits / n
    return g_logits, g_onehot


def _fw_grl(vals, meta):
    return vals[0].copy()


def _bw_grl(g, vals, out, meta):
    return (-meta["lam"] * g,)


def _fw_detach(vals, meta):
    return vals[0].copy()


def _bw_detach(g, vals, out, meta):
    return (None,)


_OPS = {
    "add": (_fw_add, _bw_add),
    "matmul": (_fw_matmul, _bw_matmul),
    "scale": (_fw_scale, _bw_scale),
    "negate": (_fw_negate, _bw_negate),
    "concat": (_fw_concat, _bw_concat),
    "tanh": (_fw_tanh, _bw_tanh),
    "relu": (_fw_relu, _bw_relu),
    "log": (_fw_log, _bw_log),
    "softmax": (_fw_softmax, _bw_softmax),
    "reduce_sum": (_fw_reduce_sum, _bw_reduce_sum),
    "embedding_mean": (_fw_embedding_mean, _bw_embedding_mean),
    "softmax_cross_entropy": (_fw_softmax_xent, _bw_softmax_xent),
    "grl": (_fw_grl, _bw_grl),
    "detach": (_fw_detach, _bw_detach),
}

DIFFERENTIABLE_OPS = tuple(k for k in _OPS if k not in ("detach",))


class Tape:
    """Append-only record of ops; node ids are indices into ``nodes``.

    Topological order is guaranteed by construction: an op may only
    consume ids already on the tape.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def value(self, nid: NodeId) -> np.ndarray:
        return self.nodes[nid].value

    def leaf(self, value) -> NodeId:
        """Record an input/constant leaf."""
        v = _as_f64(value)
        _check_finite(v, "leaf")
        self.nodes.append(Node("leaf", (), v))
        return len(self.nodes) - 1

    def record(self, op: str, inputs, **meta) -> NodeId:
        if op not in _OPS:
            raise KeyError(f"unknown op kind '{op}'")
        for nid in inputs:
            if not (0 <= nid < len(self.nodes)):
                raise IndexError(f"node id {nid} not on this tape")
        vals = [self.nodes[i].value for i in inputs]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = _OPS[op][0](vals, meta)
        out = _as_f64(out)
        _check_finite(out, op)
        self.nodes.append(Node(op, tuple(inputs), out, meta))
        return len(self.nodes) - 1

    # thin wrappers, in the order the graph code tends to use them
    def add(self, a, b):
        return self.record("add", (a, b))

    def matmul(self, a, b):
        return self.record("matmul", (a, b))

    def scale(self, a, factor):
        return self.record("scale", (a,), factor=float(factor))

    def negate(self, a):
        return self.record("negate", (a,))

    def concat(self, a, b, axis=0):
        return self.record("concat", (a, b), axis=int(axis))

    def tanh(self, a):
        return self.record("tanh", (a,))

    def relu(self, a):
        return self.record("relu", (a,))

    def log(self, a):
        return self.record("log", (a,))

    def softmax(self, a):
        return self.record("softmax", (a,))

    def reduce_sum(self, a):
        return self.record("reduce_sum", (a,))

    def embedding_mean(self, table, sequences):
        seqs = tuple(tuple(int(t) for t in s) for s in sequences)
        return self.record("embedding_mean", (table,), sequences=seqs)

    def softmax_cross_entropy(self, logits, onehot):
        return self.record("softmax_cross_entropy", (logits, onehot))

    def grl(self, a, lam):
        if lam < 0:
            raise ValueError("grl: lambda must be >= 0")
        return self.record("grl", (a,), lam=float(lam))

    def detach(self, a):
        return self.record("detach", (a,))

    def replay(self) -> list[np.ndarray]:
        """Recompute every forward value from the leaves; returns the values."""
        out: list[np.ndarray] = []
        for node in self.nodes:
            if node.op == "leaf":
                out.append(node.value.copy())
            else:
                vals = [out[i] for i in node.inputs]
                out.append(_as_f64(_OPS[node.op][0](vals, node.meta)))
        return out


def backward(tape: Tape, loss: NodeId) -> list[np.ndarray]:
    """Gradient of ``loss`` with respect to every node on the tape.

    Returns a list indexed by node id; nodes that do not feed the loss get
    zero gradients. The loss must be scalar-shaped.
    """
    loss_node = tape.nodes[loss]
    if loss_node.value.shape not in ((), (1,)):
        raise ValueError(f"backward: loss must be scalar-shaped, got {loss_node.value.shape}")
    grads = [np.zeros_like(n.value) for n in tape.nodes]
    grads[loss] = np.ones_like(loss_node.value)
    for nid in range(loss, -1, -1):
        node = tape.nodes[nid]
        if node.op == "leaf" or not node.inputs:
            continue
        g = grads[nid]
        if not g.any() and nid != loss:
            continue
        vals = [tape.nodes[i].value for i in node.inputs]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            in_grads = _OPS[node.op][1](g, vals, node.value, node.meta)
        for inp, ig in zip(node.inputs, in_grads):
            if ig is None:
                continue
            _check_finite(ig, node.op + " (backward)")
            grads[inp] = grads[inp] + ig
    return grads


def finite_diff_check(build, xs, eps: float = 1e-5) -> float:
    """Compare reverse-mode gradients against central finite differences.

    ``build(xs)`` must construct a fresh tape from the list of input arrays
    ``xs`` and return ``(tape, input_ids, loss_id)``. The check perturbs every
    coordinate of every input and returns the max relative error

        |(f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) - g_i| / max(1, |g_i|)

    where g is the backward gradient at the unperturbed point.
    """
    if eps <= 0:
        raise ValueError("finite_diff_check: eps must be > 0")
    xs = [_as_f64(x) for x in xs]
    tape, input_ids, loss_id = build(xs)
    if not np.isfinite(tape.value(loss_id)).all():
        raise NonFiniteError("finite_diff_check: f returned a non-finite value")
    grads = backward(tape, loss_id)
    analytic = [grads[i] for i in input_ids]

    worst = 0.0
    for k, x in enumerate(xs):
        flat = x.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            t_plus, _, lp = build(xs)
            f_plus = float(t_plus.value(lp))
            flat[j] = orig - eps
            t_minus, _, lm = build(xs)
            f_minus = float(t_minus.value(lm))
            flat[j] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError("finite_diff_check: f returned a non-finite value")
            fd = (f_plus - f_minus) / (2.0 * eps)
            g = analytic[k].reshape(-1)[j]
            err = abs(fd - g) / max(1.0, abs(g))
            if err > worst:
                worst = err
    return worst
