"""Tape-based reverse-mode differentiation over dense 2-D float64 arrays.

Every differentiable value is a :class:`Tensor` owned by a :class:`Tape`.
Operations append a record (inputs, output, gradient rule) to the tape, and
:func:`backward` walks the records in exact reverse order.  Sparse graph
operators are constants: gradients flow through them to the dense operand but
never into the edge weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "SparseOperator",
    "EdgeIndex",
    "backward",
    "matmul",
    "spmm",
    "add",
    "add_bias",
    "mul",
    "sum_all",
    "relu",
    "elu",
    "leaky_relu",
    "activation",
    "dropout",
    "log_softmax_rows",
    "masked_nll",
    "gather_rows",
    "segment_softmax",
    "head_scores",
    "edge_aggregate",
    "head_mean",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A node on a tape: a 2-D float64 array plus bookkeeping."""

    __slots__ = ("value", "tape", "index", "requires_grad", "trainable", "name")

    def __init__(self, value: np.ndarray, tape: "Tape", index: int,
                 requires_grad: bool, trainable: bool = False, name: Optional[str] = None):
        self.value = value
        self.tape = tape
        self.index = index
        self.requires_grad = requires_grad
        self.trainable = trainable
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    output: int
    inputs: tuple[int, ...]
    grad_fn: Callable[[np.ndarray, tuple[bool, ...]], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """Ordered log of recorded operations.

    A tape is confined to a single worker.  Leaves are registered with
    :meth:`constant` or :meth:`param`; every op appends one record, so the
    record list is already in topological order.
    """

    tensors: list[Tensor] = field(default_factory=list)
    records: list[_Record] = field(default_factory=list)

    def _new(self, value: np.ndarray, requires_grad: bool, trainable=False, name=None) -> Tensor:
        t = Tensor(value, self, len(self.tensors), requires_grad, trainable, name)
        self.tensors.append(t)
        return t

    def constant(self, value, name: Optional[str] = None) -> Tensor:
        return self._new(_as_matrix(value), requires_grad=False, name=name)

    def param(self, value, name: str) -> Tensor:
        return self._new(_as_matrix(value), requires_grad=True, trainable=True, name=name)

    def record(self, value: np.ndarray, inputs: Sequence[Tensor], grad_fn) -> Tensor:
        for t in inputs:
            if t.tape is not self:
                raise ValueError("operands belong to a different tape")
        needs = any(t.requires_grad for t in inputs)
        out = self._new(value, requires_grad=needs)
        if needs:
            self.records.append(_Record(out.index, tuple(t.index for t in inputs), grad_fn))
        return out


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got {arr.ndim}-D input")
    return arr


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every trainable leaf.

    Returns a mapping from parameter name to gradient array.  Trainable
    leaves that do not influence the loss get a zero gradient.
    """
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be scalar (1x1), got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.index: np.ones((1, 1))}
    tensors = tape.tensors
    for rec in reversed(tape.records):
        g = grads.pop(rec.output, None)
        if g is None:
            continue
        needs = tuple(tensors[i].requires_grad for i in rec.inputs)
        for i, gi in zip(rec.inputs, rec.grad_fn(g, needs)):
            if gi is None or not tensors[i].requires_grad:
                continue
            if i in grads:
                grads[i] = grads[i] + gi
            else:
                grads[i] = gi
    out = {}
    for t in tensors:
        if t.trainable:
            out[t.name] = grads.get(t.index, np.zeros_like(t.value))
    return out


# ---------------------------------------------------------------------------
# Sparse structures


class SparseOperator:
    """Fixed sparse matrix in compressed sparse row form.

    Column indices are sorted within each row with no duplicates.  Weights
    are constants; spmm never produces a gradient for them.
    """

    def __init__(self, n_rows: int, n_cols: int, indptr, indices, weights):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if indptr.shape != (n_rows + 1,):
            raise ShapeError(f"row offsets must have length {n_rows + 1}, got {indptr.shape[0]}")
        if indptr[0] != 0 or np.any(np.diff(indptr) < 0) or indptr[-1] != indices.shape[0]:
            raise ValueError("row offsets must be monotone, start at 0 and end at nnz")
        if indices.shape != weights.shape:
            raise ShapeError("column indices and weights differ in length")
        if indices.size and (indices.min() < 0 or indices.max() >= n_cols):
            raise ValueError(f"column index outside [0, {n_cols})")
        # sorted, duplicate-free within each row
        if indices.size > 1:
            steps = np.diff(indices)
            row_starts = np.zeros(indices.size, dtype=bool)
            row_starts[indptr[1:-1][indptr[1:-1] < indices.size]] = True
            if np.any((steps <= 0) & ~row_starts[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.indptr = indptr
        self.indices = indices
        self.weights = weights
        self._csr = sp.csr_matrix((weights, indices, indptr), shape=(n_rows, n_cols))
        self._csr_t = self._csr.T.tocsr()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def dense(self) -> np.ndarray:
        return self._csr.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self._csr.sum(axis=1)).ravel()


@dataclass(frozen=True)
class EdgeIndex:
    """Directed edges ``src -> dst`` grouped by destination.

    Edges are sorted by ``(dst, src)``, which lets attention weights be laid
    directly into a CSR matrix whose rows are destinations.
    """

    src: np.ndarray
    dst: np.ndarray
    num_nodes: int

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        if src.shape != dst.shape or src.ndim != 1:
            raise ShapeError("src and dst must be 1-D arrays of equal length")
        key = dst * max(self.num_nodes, 1) + src
        if key.size > 1 and np.any(np.diff(key) <= 0):
            raise ValueError("edges must be sorted by (dst, src) without duplicates")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def indptr(self) -> np.ndarray:
        counts = np.bincount(self.dst, minlength=self.num_nodes)
        return np.concatenate([[0], np.cumsum(counts)])


# ---------------------------------------------------------------------------
# Dense ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def grad_fn(g, needs):
        return (g @ bv.T if needs[0] else None, av.T @ g if needs[1] else None)

    return a.tape.record(av @ bv, (a, b), grad_fn)


def spmm(op: SparseOperator, x: Tensor) -> Tensor:
    if op.n_cols != x.rows:
        raise ShapeError(f"spmm: operator {op.shape} cannot multiply tensor {x.shape}")

    def grad_fn(g, needs):
        return (op._csr_t @ g,)

    return x.tape.record(op._csr @ x.value, (x,), grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} vs {b.shape}")

    def grad_fn(g, needs):
        return (g, g)

    return a.tape.record(a.value + b.value, (a, b), grad_fn)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x k row to every row of an n x k tensor."""
    if bias.rows != 1 or bias.cols != x.cols:
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit {x.shape}")

    def grad_fn(g, needs):
        return (g, g.sum(axis=0, keepdims=True) if needs[1] else None)

    return x.tape.record(x.value + bias.value, (x, bias), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    av, bv = a.value, b.value

    def grad_fn(g, needs):
        return (g * bv if needs[0] else None, g * av if needs[1] else None)

    return a.tape.record(av * bv, (a, b), grad_fn)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape

    def grad_fn(g, needs):
        return (np.full(shape, g[0, 0]),)

    return x.tape.record(np.array([[x.value.sum()]]), (x,), grad_fn)


def relu(x: Tensor) -> Tensor:
    # subgradient at 0 is 0
    pos = x.value > 0

    def grad_fn(g, needs):
        return (g * pos,)

    # np.maximum keeps NaN visible so divergence is not masked
    return x.tape.record(np.maximum(x.value, 0.0), (x,), grad_fn)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    v = x.value
    neg = v <= 0
    expm = np.expm1(np.where(neg, v, 0.0))
    out = np.where(neg, alpha * expm, v)

    def grad_fn(g, needs):
        return (g * np.where(neg, alpha * (expm + 1.0), 1.0),)

    return x.tape.record(out, (x,), grad_fn)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.value > 0
    factor = np.where(pos, 1.0, slope)

    def grad_fn(g, needs):
        return (g * factor,)

    return x.tape.record(x.value * factor, (x,), grad_fn)


def activation(x: Tensor, kind: str, slope: float = 0.2) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "elu":
        return elu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    raise ValueError(f"unknown activation {kind!r}")


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-p)``; eval mode is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) * (1.0 / (1.0 - p))

    def grad_fn(g, needs):
        return (g * mask,)

    return x.tape.record(x.value * mask, (x,), grad_fn)


def log_softmax_rows(x: Tensor) -> Tensor:
    v = x.value
    shifted = v - v.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def grad_fn(g, needs):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return x.tape.record(out, (x,), grad_fn)


def masked_nll(logp: Tensor, labels, mask) -> Tensor:
    """Mean negative log-likelihood over the rows listed in ``mask``."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("masked_nll: mask is empty")
    n, c = logp.shape
    if mask.min() < 0 or mask.max() >= n:
        raise ValueError("masked_nll: mask refers to rows outside the tensor")
    picked = labels[mask]
    if picked.min() < 0 or picked.max() >= c:
        raise ValueError(f"masked_nll: label outside [0, {c})")
    scale = 1.0 / mask.size
    loss = -logp.value[mask, picked].sum() * scale

    def grad_fn(g, needs):
        out = np.zeros((n, c))
        np.add.at(out, (mask, picked), -scale * g[0, 0])
        return (out,)

    return logp.tape.record(np.array([[loss]]), (logp,), grad_fn)


# ---------------------------------------------------------------------------
# Edge-level ops used by attention layers


def gather_rows(x: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    n = x.rows

    def grad_fn(g, needs):
        out = np.zeros((n, g.shape[1]))
        np.add.at(out, index, g)
        return (out,)

    return x.tape.record(x.value[index], (x,), grad_fn)


def _segment_layout(segments: np.ndarray):
    order = None
    if segments.size > 1 and np.any(np.diff(segments) < 0):
        order = np.argsort(segments, kind="stable")
        segments = segments[order]
    starts = np.flatnonzero(np.concatenate([[True], segments[1:] != segments[:-1]])) if segments.size else np.empty(0, np.int64)
    lengths = np.diff(np.append(starts, segments.size))
    return order, starts, lengths


def segment_softmax(scores: Tensor, segments, num_segments: Optional[int] = None) -> Tensor:
    """Softmax of each column of ``scores`` within groups of rows sharing a segment id.

    Rows are edges, ``segments`` holds the destination node of each edge, and
    columns are independent attention heads.
    """
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (scores.rows,):
        raise ShapeError(f"segment_softmax: {segments.shape[0]} segment ids for {scores.rows} rows")
    if num_segments is not None and segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        raise ValueError("segment id outside [0, num_segments)")
    order, starts, lengths = _segment_layout(segments)
    v = scores.value if order is None else scores.value[order]
    if v.shape[0]:
        seg_max = np.maximum.reduceat(v, starts, axis=0)
        e = np.exp(v - np.repeat(seg_max, lengths, axis=0))
        denom = np.add.reduceat(e, starts, axis=0)
        y = e / np.repeat(denom, lengths, axis=0)
    else:
        y = v.copy()

    def grad_fn(g, needs):
        gs = g if order is None else g[order]
        inner = np.add.reduceat(gs * y, starts, axis=0) if gs.shape[0] else gs
        dx = y * (gs - np.repeat(inner, lengths, axis=0))
        if order is not None:
            out = np.empty_like(dx)
            out[order] = dx
            dx = out
        return (dx,)

    if order is not None:
        out = np.empty_like(y)
        out[order] = y
    else:
        out = y
    return scores.tape.record(out, (scores,), grad_fn)


def head_scores(h: Tensor, att: Tensor) -> Tensor:
    """Per-head dot products: ``h`` is n x (H*F), ``att`` is H x F; result is n x H."""
    heads, width = att.shape
    if h.cols != heads * width:
        raise ShapeError(f"head_scores: features {h.shape} do not split into {heads} heads of {width}")
    h3 = h.value.reshape(h.rows, heads, width)
    av = att.value

    def grad_fn(g, needs):
        dh = (g[:, :, None] * av[None]).reshape(h.shape) if needs[0] else None
        da = np.einsum("nh,nhf->hf", g, h3) if needs[1] else None
        return (dh, da)

    return h.tape.record(np.einsum("nhf,hf->nh", h3, av), (h, att), grad_fn)


def edge_aggregate(alpha: Tensor, h: Tensor, edges: EdgeIndex) -> Tensor:
    """Attention-weighted neighbour sum, one weight column per head.

    ``out[i, head k] = sum over edges (j -> i) of alpha[e, k] * h[j, head k]``.
    """
    heads = alpha.cols
    if alpha.rows != edges.num_edges:
        raise ShapeError(f"edge_aggregate: {alpha.rows} weights for {edges.num_edges} edges")
    if h.rows != edges.num_nodes or h.cols % heads:
        raise ShapeError(f"edge_aggregate: features {h.shape} incompatible with {heads} heads")
    n, width = edges.num_nodes, h.cols // heads
    indptr = edges.indptr
    hv = h.value.reshape(n, heads, width)
    av = alpha.value
    mats = [sp.csr_matrix((av[:, k], edges.src, indptr), shape=(n, n)) for k in range(heads)]
    out = np.concatenate([mats[k] @ hv[:, k, :] for k in range(heads)], axis=1)

    def grad_fn(g, needs):
        g3 = g.reshape(n, heads, width)
        da = (g3[edges.dst] * hv[edges.src]).sum(axis=2) if needs[0] else None
        dh = None
        if needs[1]:
            dh = np.concatenate([mats[k].T @ g3[:, k, :] for k in range(heads)], axis=1)
        return (da, dh)

    return h.tape.record(out, (alpha, h), grad_fn)


def head_mean(x: Tensor, heads: int) -> Tensor:
    """Average ``heads`` equal column blocks of an n x (H*C) tensor."""
    if x.cols % heads:
        raise ShapeError(f"head_mean: {x.cols} columns do not split into {heads} heads")
    width = x.cols // heads

    def grad_fn(g, needs):
        return (np.tile(g / heads, (1, heads)),)

    return x.tape.record(x.value.reshape(x.rows, heads, width).mean(axis=1), (x,), grad_fn)
