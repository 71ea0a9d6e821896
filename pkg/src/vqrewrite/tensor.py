"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Everything is stored row-major in 64-bit floats. Broadcasting is limited to
the documented cases (matrix product, row-wise add of a vector onto a
matrix, and scalar-tensor combinations); anything else is a contract
violation, not a silent reshape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ContractViolation(ValueError):
    """An operation was invoked outside its documented contract."""


class NonDeterministicFunction(RuntimeError):
    """Two forward passes of a supposedly deterministic function disagreed."""


def _as_f64(values, shape=None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(tuple(shape))
    return np.ascontiguousarray(arr)


class DTensor:
    """A dense float64 array plus an optional gradient and tape link.

    A DTensor without a node link is a plain immutable value and may be
    shared read-only across threads; linked tensors belong to exactly one
    Tape and are single-threaded.
    """

    __slots__ = ("_array", "grad", "tape", "node_id")

    def __init__(self, values, shape=None):
        self._array = _as_f64(values, shape)
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None
        self.node_id: int | None = None

    @property
    def data(self) -> np.ndarray:
        return self._array

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the stored values."""
        return self._array.reshape(-1)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    def item(self) -> float:
        if self._array.size != 1:
            raise ContractViolation("item() requires a single-element tensor")
        return float(self._array.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        return f"DTensor(shape={self.shape}, tracked={self.node_id is not None})"


def tensor(values, shape=None) -> DTensor:
    return DTensor(values, shape)


def scalar(value: float) -> DTensor:
    return DTensor(np.float64(value))


class _Node:
    __slots__ = ("op", "inputs", "run_backward", "tensor")

    def __init__(self, op, inputs, run_backward, out):
        self.op = op
        self.inputs = inputs
        self.run_backward = run_backward
        self.tensor = out


class Tape:
    """Append-only record of a forward pass, replayed once in reverse.

    Nodes are recorded in execution order, so every node's inputs precede
    it and a single reverse sweep visits each node exactly once. A tape is
    consumed by ``backward``: all recorded tensors are detached afterwards,
    and reuse requires re-watching parameters on a fresh tape.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def watch(self, t: DTensor) -> DTensor:
        """Register a leaf whose gradient should be accumulated."""
        if t.tape is self:
            return t
        t.tape = self
        t.node_id = len(self.nodes)
        self.nodes.append(_Node("leaf", (), None, t))
        return t

    def record(self, op: str, inputs: Sequence[int], run_backward, out: DTensor) -> DTensor:
        nid = len(self.nodes)
        out.tape = self
        out.node_id = nid
        self.nodes.append(_Node(op, tuple(inputs), run_backward, out))
        return out

    def backward(self, loss: DTensor) -> None:
        """Populate grads of every leaf reachable from ``loss``.

        Unreachable leaves keep their grad absent. The record is consumed;
        a second backward on the same tape is a contract violation rather
        than silent misbehavior.
        """
        if loss.tape is not self or loss.node_id is None:
            raise ContractViolation("loss is not recorded on this tape")
        if loss.size != 1:
            raise ContractViolation("backward requires a scalar loss")
        if self.consumed:
            raise ContractViolation("this tape was already replayed; record a fresh forward pass")
        self.consumed = True

        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}

        def accumulate(nid: int, g: np.ndarray) -> None:
            cur = grads.get(nid)
            grads[nid] = g if cur is None else cur + g

        for nid in range(loss.node_id, -1, -1):
            g = grads.pop(nid, None)
            if g is None:
                continue
            node = self.nodes[nid]
            if node.op == "leaf":
                t = node.tensor
                t.grad = g.copy() if t.grad is None else t.grad + g
            else:
                node.run_backward(g, accumulate)

        for node in self.nodes:
            node.tensor.tape = None
            node.tensor.node_id = None

    def reset(self) -> None:
        """Detach every recorded tensor and drop the record."""
        for node in self.nodes:
            node.tensor.tape = None
            node.tensor.node_id = None
        self.nodes.clear()
        self.consumed = False


def _tape_of(*tensors: DTensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ContractViolation("operation mixes tensors from different tapes")
    return tape


def _nid(t: DTensor, tape: Tape | None) -> int | None:
    return t.node_id if tape is not None and t.tape is tape else None


def _finish(op: str, tape: Tape | None, ids, run_backward, out: DTensor) -> DTensor:
    if tape is None:
        return out
    return tape.record(op, [i for i in ids if i is not None], run_backward, out)


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a gradient back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    if len(shape) == 1 and g.ndim == 2 and g.shape[1] == shape[0]:
        return g.sum(axis=0)
    raise ContractViolation(f"cannot reduce gradient {g.shape} to {shape}")


def add(a: DTensor, b: DTensor) -> DTensor:
    av, bv = a.data, b.data
    if av.shape != bv.shape:
        row_broadcast = av.ndim == 2 and bv.ndim == 1 and bv.shape[0] == av.shape[1]
        scalar_case = av.ndim == 0 or bv.ndim == 0
        if not (row_broadcast or scalar_case):
            raise ContractViolation(f"add shapes {av.shape} and {bv.shape} are incompatible")
    tape = _tape_of(a, b)
    out = DTensor(av + bv)
    ai, bi = _nid(a, tape), _nid(b, tape)

    def run_backward(g, acc):
        if ai is not None:
            acc(ai, _reduce_to(g, av.shape))
        if bi is not None:
            acc(bi, _reduce_to(g, bv.shape))

    return _finish("add", tape, (ai, bi), run_backward, out)


def sub(a: DTensor, b: DTensor) -> DTensor:
    av, bv = a.data, b.data
    if av.shape != bv.shape and av.ndim != 0 and bv.ndim != 0:
        raise ContractViolation(f"sub shapes {av.shape} and {bv.shape} are incompatible")
    tape = _tape_of(a, b)
    out = DTensor(av - bv)
    ai, bi = _nid(a, tape), _nid(b, tape)

    def run_backward(g, acc):
        if ai is not None:
            acc(ai, _reduce_to(g, av.shape))
        if bi is not None:
            acc(bi, -_reduce_to(g, bv.shape))

    return _finish("sub", tape, (ai, bi), run_backward, out)


def mul(a: DTensor, b: DTensor) -> DTensor:
    av, bv = a.data, b.data
    if av.shape != bv.shape and av.ndim != 0 and bv.ndim != 0:
        raise ContractViolation(f"mul shapes {av.shape} and {bv.shape} are incompatible")
    tape = _tape_of(a, b)
    out = DTensor(av * bv)
    ai, bi = _nid(a, tape), _nid(b, tape)

    def run_backward(g, acc):
        if ai is not None:
            acc(ai, _reduce_to(g * bv, av.shape))
        if bi is not None:
            acc(bi, _reduce_to(g * av, bv.shape))

    return _finish("mul", tape, (ai, bi), run_backward, out)


def saxpb(a: DTensor, scale: float, shift: float = 0.0) -> DTensor:
    """Affine map by python constants: scale * a + shift."""
    tape = _tape_of(a)
    out = DTensor(a.data * scale + shift)
    ai = _nid(a, tape)

    def run_backward(g, acc):
        acc(ai, g * scale)

    return _finish("saxpb", tape, (ai,), run_backward, out)


def neg(a: DTensor) -> DTensor:
    return saxpb(a, -1.0)


def matmul(a: DTensor, b: DTensor) -> DTensor:
    av, bv = a.data, b.data
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ContractViolation(f"matmul needs (m,k)x(k,n), got {av.shape} and {bv.shape}")
    tape = _tape_of(a, b)
    # Batched per-row product: each output row is computed independently of
    # the row count, which the incremental-decoding bitwise contract needs.
    out = DTensor(np.matmul(av[:, None, :], bv)[:, 0, :])
    ai, bi = _nid(a, tape), _nid(b, tape)

    def run_backward(g, acc):
        if ai is not None:
            acc(ai, g @ bv.T)
        if bi is not None:
            acc(bi, av.T @ g)

    return _finish("matmul", tape, (ai, bi), run_backward, out)


def mv(m: DTensor, v: DTensor) -> DTensor:
    """Matrix-vector product (m,k)@(k,) -> (m,), rows computed independently."""
    mvl, vv = m.data, v.data
    if mvl.ndim != 2 or vv.ndim != 1 or mvl.shape[1] != vv.shape[0]:
        raise ContractViolation(f"mv needs (m,k)x(k,), got {mvl.shape} and {vv.shape}")
    tape = _tape_of(m, v)
    out = DTensor(np.matmul(mvl[:, None, :], vv[:, None])[:, 0, 0])
    mi, vi = _nid(m, tape), _nid(v, tape)

    def run_backward(g, acc):
        if mi is not None:
            acc(mi, g[:, None] * vv[None, :])
        if vi is not None:
            acc(vi, mvl.T @ g)

    return _finish("mv", tape, (mi, vi), run_backward, out)


def vm(v: DTensor, m: DTensor) -> DTensor:
    """Vector-matrix product (k,)@(k,n) -> (n,)."""
    vv, mvl = v.data, m.data
    if vv.ndim != 1 or mvl.ndim != 2 or vv.shape[0] != mvl.shape[0]:
        raise ContractViolation(f"vm needs (k,)x(k,n), got {vv.shape} and {mvl.shape}")
    tape = _tape_of(v, m)
    out = DTensor(vv @ mvl)
    vi, mi = _nid(v, tape), _nid(m, tape)

    def run_backward(g, acc):
        if vi is not None:
            acc(vi, mvl @ g)
        if mi is not None:
            acc(mi, vv[:, None] * g[None, :])

    return _finish("vm", tape, (vi, mi), run_backward, out)


def dot(a: DTensor, b: DTensor) -> DTensor:
    av, bv = a.data, b.data
    if av.ndim != 1 or bv.ndim != 1 or av.shape != bv.shape:
        raise ContractViolation(f"dot needs equal-length vectors, got {av.shape} and {bv.shape}")
    tape = _tape_of(a, b)
    out = DTensor(np.float64(av @ bv))
    ai, bi = _nid(a, tape), _nid(b, tape)

    def run_backward(g, acc):
        if ai is not None:
            acc(ai, g * bv)
        if bi is not None:
            acc(bi, g * av)

    return _finish("dot", tape, (ai, bi), run_backward, out)


def transpose(a: DTensor) -> DTensor:
    if a.ndim != 2:
        raise ContractViolation("transpose is defined for matrices")
    tape = _tape_of(a)
    out = DTensor(np.ascontiguousarray(a.data.T))
    ai = _nid(a, tape)

    def run_backward(g, acc):
        acc(ai, np.ascontiguousarray(g.T))

    return _finish("transpose", tape, (ai,), run_backward, out)


def reshape(a: DTensor, shape) -> DTensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ContractViolation(f"cannot reshape {a.shape} to {shape}")
    tape = _tape_of(a)
    out = DTensor(a.data.reshape(shape).copy())
    ai = _nid(a, tape)
    in_shape = a.shape

    def run_backward(g, acc):
        acc(ai, g.reshape(in_shape))

    return _finish("reshape", tape, (ai,), run_backward, out)


def relu(a: DTensor) -> DTensor:
    tape = _tape_of(a)
    av = a.data
    out = DTensor(np.maximum(av, 0.0))
    ai = _nid(a, tape)

    def run_backward(g, acc):
        acc(ai, g * (av > 0.0))

    return _finish("relu", tape, (ai,), run_backward, out)


_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(a: DTensor) -> DTensor:
    av = a.data
    with np.errstate(over="ignore"):
        y = np.where(av >= 0, 1.0 / (1.0 + np.exp(-av)), np.exp(av) / (1.0 + np.exp(av)))
    # keep the output strictly inside (0, 1) even where exp saturates
    y = np.clip(y, _SIG_LO, _SIG_HI)
    tape = _tape_of(a)
    out = DTensor(y)
    ai = _nid(a, tape)

    def run_backward(g, acc):
        acc(ai, g * y * (1.0 - y))

    return _finish("sigmoid", tape, (ai,), run_backward, out)


def log(a: DTensor) -> DTensor:
    av = a.data
    if np.any(av <= 0.0):
        raise ContractViolation("log requires strictly positive inputs")
    tape = _tape_of(a)
    out = DTensor(np.log(av))
    ai = _nid(a, tape)

    def run_backward(g, acc):
        acc(ai, g / av)

    return _finish("log", tape, (ai,), run_backward, out)


def softmax(a: DTensor, axis: int = -1) -> DTensor:
    av = a.data
    if av.ndim == 0 or not (-av.ndim <= axis < av.ndim):
        raise ContractViolation(f"axis {axis} invalid for shape {av.shape}")
    shifted = av - np.max(av, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    tape = _tape_of(a)
    out = DTensor(y)
    ai = _nid(a, tape)

    def run_backward(g, acc):
        acc(ai, y * (g - np.sum(g * y, axis=axis, keepdims=True)))

    return _finish("softmax", tape, (ai,), run_backward, out)


def layer_norm(x: DTensor, gain: DTensor, bias: DTensor, eps: float) -> DTensor:
    xv, gv, bv = x.data, gain.data, bias.data
    if eps <= 0.0:
        raise ContractViolation("layer_norm eps must be positive")
    k = xv.shape[-1]
    if gv.shape != (k,) or bv.shape != (k,):
        raise ContractViolation(f"gain/bias must have shape ({k},), got {gv.shape} and {bv.shape}")
    mu = np.mean(xv, axis=-1, keepdims=True)
    var = np.mean((xv - mu) ** 2, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    tape = _tape_of(x, gain, bias)
    out = DTensor(xhat * gv + bv)
    xi, gi, bi = _nid(x, tape), _nid(gain, tape), _nid(bias, tape)

    def run_backward(g, acc):
        if xi is not None:
            dxhat = g * gv
            m1 = np.mean(dxhat, axis=-1, keepdims=True)
            m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True)
            acc(xi, inv * (dxhat - m1 - xhat * m2))
        if gi is not None:
            gg = g * xhat
            acc(gi, gg if gg.ndim == 1 else gg.sum(axis=0))
        if bi is not None:
            acc(bi, g if g.ndim == 1 else g.sum(axis=0))

    return _finish("layer_norm", tape, (xi, gi, bi), run_backward, out)


def concat_rows(parts: Sequence[DTensor]) -> DTensor:
    if not parts:
        raise ContractViolation("concat_rows needs at least one part")
    cols = parts[0].data.shape[-1]
    for p in parts:
        if p.ndim != 2 or p.data.shape[1] != cols:
            raise ContractViolation("concat_rows parts must be matrices with equal columns")
    tape = _tape_of(*parts)
    out = DTensor(np.concatenate([p.data for p in parts], axis=0))
    ids = [_nid(p, tape) for p in parts]
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def run_backward(g, acc):
        for i, pid in enumerate(ids):
            if pid is not None:
                acc(pid, g[offsets[i]:offsets[i + 1]])

    return _finish("concat_rows", tape, ids, run_backward, out)


def concat_cols(parts: Sequence[DTensor]) -> DTensor:
    if not parts:
        raise ContractViolation("concat_cols needs at least one part")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.ndim != 2 or p.data.shape[0] != rows:
            raise ContractViolation("concat_cols parts must be matrices with equal rows")
    tape = _tape_of(*parts)
    out = DTensor(np.concatenate([p.data for p in parts], axis=1))
    ids = [_nid(p, tape) for p in parts]
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def run_backward(g, acc):
        for i, pid in enumerate(ids):
            if pid is not None:
                acc(pid, np.ascontiguousarray(g[:, offsets[i]:offsets[i + 1]]))

    return _finish("concat_cols", tape, ids, run_backward, out)


def concat_vec(parts: Sequence[DTensor]) -> DTensor:
    if not parts or any(p.ndim != 1 for p in parts):
        raise ContractViolation("concat_vec needs one or more vectors")
    tape = _tape_of(*parts)
    out = DTensor(np.concatenate([p.data for p in parts]))
    ids = [_nid(p, tape) for p in parts]
    offsets = np.cumsum([0] + [p.size for p in parts])

    def run_backward(g, acc):
        for i, pid in enumerate(ids):
            if pid is not None:
                acc(pid, g[offsets[i]:offsets[i + 1]])

    return _finish("concat_vec", tape, ids, run_backward, out)


def stack_rows(vectors: Sequence[DTensor]) -> DTensor:
    if not vectors or any(v.ndim != 1 for v in vectors):
        raise ContractViolation("stack_rows needs one or more vectors")
    k = vectors[0].size
    if any(v.size != k for v in vectors):
        raise ContractViolation("stack_rows vectors must share a length")
    tape = _tape_of(*vectors)
    out = DTensor(np.stack([v.data for v in vectors], axis=0))
    ids = [_nid(v, tape) for v in vectors]

    def run_backward(g, acc):
        for i, vid in enumerate(ids):
            if vid is not None:
                acc(vid, g[i])

    return _finish("stack_rows", tape, ids, run_backward, out)


def slice_rows(a: DTensor, start: int, stop: int) -> DTensor:
    if a.ndim != 2 or not (0 <= start <= stop <= a.shape[0]):
        raise ContractViolation(f"row slice [{start}:{stop}] invalid for shape {a.shape}")
    tape = _tape_of(a)
    out = DTensor(a.data[start:stop].copy())
    ai = _nid(a, tape)
    shape = a.shape

    def run_backward(g, acc):
        full = np.zeros(shape)
        full[start:stop] = g
        acc(ai, full)

    return _finish("slice_rows", tape, (ai,), run_backward, out)


def slice_cols(a: DTensor, start: int, stop: int) -> DTensor:
    if a.ndim != 2 or not (0 <= start <= stop <= a.shape[1]):
        raise ContractViolation(f"column slice [{start}:{stop}] invalid for shape {a.shape}")
    tape = _tape_of(a)
    out = DTensor(np.ascontiguousarray(a.data[:, start:stop]))
    ai = _nid(a, tape)
    shape = a.shape

    def run_backward(g, acc):
        full = np.zeros(shape)
        full[:, start:stop] = g
        acc(ai, full)

    return _finish("slice_cols", tape, (ai,), run_backward, out)


def row(a: DTensor, i: int) -> DTensor:
    if a.ndim != 2 or not (0 <= i < a.shape[0]):
        raise ContractViolation(f"row {i} invalid for shape {a.shape}")
    tape = _tape_of(a)
    out = DTensor(a.data[i].copy())
    ai = _nid(a, tape)
    shape = a.shape

    def run_backward(g, acc):
        full = np.zeros(shape)
        full[i] = g
        acc(ai, full)

    return _finish("row", tape, (ai,), run_backward, out)


def col(a: DTensor, j: int) -> DTensor:
    if a.ndim != 2 or not (0 <= j < a.shape[1]):
        raise ContractViolation(f"column {j} invalid for shape {a.shape}")
    tape = _tape_of(a)
    out = DTensor(np.ascontiguousarray(a.data[:, j]))
    ai = _nid(a, tape)
    shape = a.shape

    def run_backward(g, acc):
        full = np.zeros(shape)
        full[:, j] = g
        acc(ai, full)

    return _finish("col", tape, (ai,), run_backward, out)


def gather_rows(table: DTensor, ids: Sequence[int]) -> DTensor:
    tv = table.data
    if tv.ndim != 2:
        raise ContractViolation("gather_rows needs a matrix table")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= tv.shape[0])):
        raise ContractViolation("gather indices out of range")
    tape = _tape_of(table)
    out = DTensor(tv[idx])
    ti = _nid(table, tape)
    shape = tv.shape

    def run_backward(g, acc):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        acc(ti, full)

    return _finish("gather_rows", tape, (ti,), run_backward, out)


def pick(v: DTensor, i: int) -> DTensor:
    if v.ndim != 1 or not (0 <= i < v.size):
        raise ContractViolation(f"pick index {i} invalid for shape {v.shape}")
    tape = _tape_of(v)
    out = DTensor(np.float64(v.data[i]))
    vi = _nid(v, tape)
    n = v.size

    def run_backward(g, acc):
        full = np.zeros(n)
        full[i] = g
        acc(vi, full)

    return _finish("pick", tape, (vi,), run_backward, out)


def scatter_sum(v: DTensor, ids: Sequence[int], size: int) -> DTensor:
    """Sum vector entries into buckets: out[j] = sum of v[i] where ids[i] == j."""
    vv = v.data
    idx = np.asarray(ids, dtype=np.int64)
    if vv.ndim != 1 or idx.shape != vv.shape:
        raise ContractViolation("scatter_sum needs a vector and aligned integer ids")
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ContractViolation("scatter ids out of range")
    tape = _tape_of(v)
    out = DTensor(np.bincount(idx, weights=vv, minlength=size))
    vi = _nid(v, tape)

    def run_backward(g, acc):
        acc(vi, g[idx])

    return _finish("scatter_sum", tape, (vi,), run_backward, out)


def pad1d(v: DTensor, size: int) -> DTensor:
    if v.ndim != 1 or size < v.size:
        raise ContractViolation(f"pad1d target {size} smaller than input {v.size}")
    tape = _tape_of(v)
    padded = np.zeros(size)
    padded[: v.size] = v.data
    out = DTensor(padded)
    vi = _nid(v, tape)
    n = v.size

    def run_backward(g, acc):
        acc(vi, g[:n])

    return _finish("pad1d", tape, (vi,), run_backward, out)


def pad2d(a: DTensor, rows: int, cols: int) -> DTensor:
    """Embed a matrix at the top-left corner of a larger zero matrix."""
    av = a.data
    if av.ndim != 2 or rows < av.shape[0] or cols < av.shape[1]:
        raise ContractViolation(f"pad2d target ({rows},{cols}) smaller than input {av.shape}")
    tape = _tape_of(a)
    padded = np.zeros((rows, cols))
    padded[: av.shape[0], : av.shape[1]] = av
    out = DTensor(padded)
    ai = _nid(a, tape)
    r, c = av.shape

    def run_backward(g, acc):
        acc(ai, np.ascontiguousarray(g[:r, :c]))

    return _finish("pad2d", tape, (ai,), run_backward, out)


def sum_all(a: DTensor) -> DTensor:
    tape = _tape_of(a)
    out = DTensor(np.float64(a.data.sum()))
    ai = _nid(a, tape)
    shape = a.shape

    def run_backward(g, acc):
        acc(ai, np.full(shape, float(g)))

    return _finish("sum_all", tape, (ai,), run_backward, out)


@dataclass
class GradCheckEntry:
    max_rel_error: float
    max_abs_analytic: float
    max_abs_numeric: float


@dataclass
class GradCheckReport:
    step: float
    tol: float
    per_param: dict[str, GradCheckEntry] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.per_param.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def summary(self) -> str:
        lines = [f"gradient check (step={self.step:g}, tol={self.tol:g})"]
        for name, e in sorted(self.per_param.items()):
            status = "ok" if e.max_rel_error < self.tol else "FAIL"
            lines.append(
                f"  {name}: rel_err={e.max_rel_error:.3e} "
                f"|analytic|={e.max_abs_analytic:.3e} |numeric|={e.max_abs_numeric:.3e} [{status}]"
            )
        return "\n".join(lines)


def grad_check(
    f: Callable[[], DTensor],
    params: dict[str, DTensor],
    step: float = 1e-4,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients of ``f`` against central finite differences.

    ``f`` must rebuild its forward pass (on a fresh tape) at every call and
    depend on the current values of ``params``. Relative error per element is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if not (0.0 < step <= 1e-2):
        raise ContractViolation("step must lie in (0, 1e-2]")

    first = float(f())
    second = float(f())
    if first != second:
        raise NonDeterministicFunction(
            f"two forward passes disagree: {first!r} vs {second!r}"
        )

    for t in params.values():
        t.zero_grad()
    loss = f()
    loss.tape.backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape))
        for name, t in params.items()
    }

    report = GradCheckReport(step=step, tol=tol)
    for name, t in params.items():
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = float(f())
            flat[j] = orig - step
            lo = float(f())
            flat[j] = orig
            numeric[j] = (hi - lo) / (2.0 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = np.abs(a - numeric) / denom
        report.per_param[name] = GradCheckEntry(
            max_rel_error=float(rel.max()) if rel.size else 0.0,
            max_abs_analytic=float(np.abs(a).max()) if a.size else 0.0,
            max_abs_numeric=float(np.abs(numeric).max()) if numeric.size else 0.0,
        )
    return report
