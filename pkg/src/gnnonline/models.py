"""Two-layer GCN, GCN-64, GraphSAGE-mean, GAT and MLP on the autodiff tape."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .graph import Graph, edge_index_with_self_loops, gcn_operator, sage_mean_operator

__all__ = [
    "MODEL_KINDS",
    "ModelConfig",
    "GraphInputs",
    "glorot_init",
    "init_params",
    "forward",
    "param_count",
    "config_hash",
    "save_params",
    "load_params",
]

MODEL_KINDS = ("gcn", "gcn64", "sage", "gat", "mlp")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hidden: int
    heads: tuple[int, int] = (1, 1)
    dropout: float = 0.5
    activation: str = "relu"
    lr: float = 0.005
    weight_decay: float = 5e-4
    bias: bool = False
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.hidden < 1 or min(self.heads) < 1:
            raise ValueError("hidden units and heads must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    @classmethod
    def default(cls, kind: str, dataset: str = "") -> "ModelConfig":
        """Published hyperparameters, with the Pubmed overrides for GAT."""
        pubmed = dataset.lower() == "pubmed"
        if kind == "gcn":
            return cls("gcn", hidden=16)
        if kind == "gcn64":
            return cls("gcn64", hidden=64)
        if kind == "sage":
            return cls("sage", hidden=64, lr=0.01)
        if kind == "mlp":
            return cls("mlp", hidden=64, bias=True)
        if kind == "gat":
            return cls("gat", hidden=8, heads=(8, 8 if pubmed else 1), activation="elu",
                       lr=0.01 if pubmed else 0.005, weight_decay=1e-3 if pubmed else 5e-4)
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["heads"] = list(self.heads)
        return d


class GraphInputs:
    """Propagation structures for one graph, built once and reused every epoch."""

    def __init__(self, graph: Graph):
        self.graph = graph

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @cached_property
    def gcn(self):
        return gcn_operator(self.graph)

    @cached_property
    def sage(self):
        return sage_mean_operator(self.graph)

    @cached_property
    def edges(self):
        return edge_index_with_self_loops(self.graph)


def glorot_init(shape, rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = shape
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"glorot_init needs positive dimensions, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _param_shapes(config: ModelConfig, num_features: int, num_classes: int) -> dict[str, tuple[int, int]]:
    h = config.hidden
    if config.kind == "gat":
        h1, h2 = config.heads
        shapes = {
            "W1": (num_features, h1 * h), "att_dst1": (h1, h), "att_src1": (h1, h),
            "W2": (h1 * h, h2 * num_classes), "att_dst2": (h2, num_classes), "att_src2": (h2, num_classes),
        }
        if config.bias:
            shapes["b1"] = (1, h1 * h)
            shapes["b2"] = (1, num_classes)
        return shapes
    shapes = {"W1": (num_features, h), "W2": (h, num_classes)}
    if config.bias:
        shapes["b1"] = (1, h)
        if config.kind != "mlp":
            shapes["b2"] = (1, num_classes)
    return shapes


def param_count(config: ModelConfig, num_features: int, num_classes: int) -> int:
    return sum(r * c for r, c in _param_shapes(config, num_features, num_classes).values())


def init_params(config: ModelConfig, num_features: int, num_classes: int,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot weights and attention vectors; zero biases."""
    params = {}
    for name, shape in _param_shapes(config, num_features, num_classes).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        elif name.startswith("att_dst"):
            # one 2F -> 1 scoring map per head, split into its [a_dst ; a_src] halves
            heads, width = shape
            full = np.stack([glorot_init((2 * width, 1), rng)[:, 0] for _ in range(heads)])
            params[name] = full[:, :width].copy()
            params["att_src" + name[len("att_dst"):]] = full[:, width:].copy()
        elif not name.startswith("att_src"):
            params[name] = glorot_init(shape, rng)
    return {name: params[name] for name in _param_shapes(config, num_features, num_classes)}


def _gat_layer(tape_params, x, layer: int, heads: int, edges, config):
    wh = ad.matmul(x, tape_params[f"W{layer}"])
    s_dst = ad.head_scores(wh, tape_params[f"att_dst{layer}"])
    s_src = ad.head_scores(wh, tape_params[f"att_src{layer}"])
    scores = ad.leaky_relu(ad.add(ad.gather_rows(s_dst, edges.dst), ad.gather_rows(s_src, edges.src)),
                           config.leaky_slope)
    alpha = ad.segment_softmax(scores, edges.dst, edges.num_nodes)
    return ad.edge_aggregate(alpha, wh, edges)


def forward(config: ModelConfig, params: dict[str, ad.Tensor], graph: Optional[GraphInputs],
            features: ad.Tensor, training: bool, rng: Optional[np.random.Generator] = None) -> ad.Tensor:
    """Logits for every node.  ``params`` are tensors on the same tape as ``features``."""
    p = config.dropout
    if config.kind != "mlp":
        if graph is None:
            raise ValueError(f"{config.kind} needs a graph")
        if graph.num_nodes != features.rows:
            raise ad.ShapeError(f"graph has {graph.num_nodes} nodes, features have {features.rows} rows")
    if features.cols != params["W1"].rows:
        raise ad.ShapeError(f"features have {features.cols} columns, W1 expects {params['W1'].rows}")

    x = ad.dropout(features, p, training, rng)
    if config.kind == "gat":
        h = _gat_layer(params, x, 1, config.heads[0], graph.edges, config)
        if "b1" in params:
            h = ad.add_bias(h, params["b1"])
        h = ad.activation(h, config.activation)
        h = ad.dropout(h, p, training, rng)
        out = ad.head_mean(_gat_layer(params, h, 2, config.heads[1], graph.edges, config), config.heads[1])
        return ad.add_bias(out, params["b2"]) if "b2" in params else out

    if config.kind == "mlp":
        h = ad.matmul(x, params["W1"])
    else:
        op = graph.sage if config.kind == "sage" else graph.gcn
        h = ad.spmm(op, ad.matmul(x, params["W1"]))
    if "b1" in params:
        h = ad.add_bias(h, params["b1"])
    h = ad.activation(h, config.activation)
    h = ad.dropout(h, p, training, rng)
    out = ad.matmul(h, params["W2"])
    if config.kind != "mlp":
        out = ad.spmm(op, out)
    return ad.add_bias(out, params["b2"]) if "b2" in params else out


# ---------------------------------------------------------------------------
# Checkpoints: sha256(config) | u32 count | per tensor: u32 name length,
# name bytes, u32 rows, u32 cols, float64 LE row-major values.


def config_hash(config: ModelConfig) -> bytes:
    return hashlib.sha256(json.dumps(config.to_dict(), sort_keys=True).encode()).digest()


def save_params(path, config: ModelConfig, params: dict[str, np.ndarray]) -> None:
    chunks = [config_hash(config), struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        chunks += [struct.pack("<I", len(raw)), raw, struct.pack("<II", *arr.shape), arr.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def load_params(path, config: Optional[ModelConfig] = None) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    digest, (count,) = data[:32], struct.unpack_from("<I", data, 32)
    if config is not None and digest != config_hash(config):
        raise ValueError(f"{path}: checkpoint was written for a different model configuration")
    pos, out = 36, {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        name = data[pos + 4:pos + 4 + n].decode("utf-8")
        pos += 4 + n
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        size = rows * cols * 8
        if pos + size > len(data):
            raise ValueError(f"{path}: truncated tensor {name!r}")
        out[name] = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(rows, cols).copy()
        pos += size
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return out
