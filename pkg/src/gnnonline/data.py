"""Dataset bundles and the few-many (A) / many-few (B) splits.

A bundle is a directory::

    meta.json      {"name", "num_nodes", "num_features", "num_classes",
                    optional "train_mask", "test_mask" file names}
    edges.tsv      one "u<TAB>v" pair per line, 0-based ids
    features.bin   row-major float32 little-endian, num_nodes x num_features
    labels.tsv     one class id per line
    train_mask.txt / test_mask.txt   optional, one node id per line
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .graph import Graph, build_graph, induced_training_graph
from .rng import make_rng

__all__ = [
    "BundleError",
    "MissingFileError",
    "ShapeMismatchError",
    "LabelRangeError",
    "SplitError",
    "DatasetBundle",
    "Split",
    "PUBLISHED_STATS",
    "load_bundle",
    "write_bundle",
    "row_normalize",
    "build_setting_a",
    "build_setting_b",
    "split_edge_stats",
]


class BundleError(ValueError):
    pass


class MissingFileError(BundleError, FileNotFoundError):
    pass


class ShapeMismatchError(BundleError):
    pass


class LabelRangeError(BundleError):
    pass


class SplitError(ValueError):
    pass


# Published dataset and split statistics.  Edge counts are undirected and
# exclude self-loops.
PUBLISHED_STATS = {
    "cora": dict(classes=7, features=1433, nodes=2708, edges=5278, avg_degree=3.90,
                 A=dict(train=440, train_edges=342, unseen=2268, unseen_edges=4936, test=1000),
                 B=dict(train=2268, train_edges=3582, unseen=440, unseen_edges=1696, test=440)),
    "citeseer": dict(classes=6, features=3703, nodes=3327, edges=4552, avg_degree=2.77,
                     A=dict(train=620, train_edges=139, unseen=2707, unseen_edges=4413, test=1000),
                     B=dict(train=2707, train_edges=2939, unseen=620, unseen_edges=1613, test=620)),
    "pubmed": dict(classes=3, features=500, nodes=19717, edges=44324, avg_degree=4.50,
                   A=dict(train=560, train_edges=34, unseen=19157, unseen_edges=44290, test=1000),
                   B=dict(train=19157, train_edges=41858, unseen=560, unseen_edges=2466, test=560)),
}

DEFAULT_TEST_SIZE = 1000


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    name: str
    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    num_classes: int
    train_mask: Optional[np.ndarray] = None
    test_mask: Optional[np.ndarray] = None

    @property
    def num_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def graph(self) -> Graph:
        return build_graph(self.num_nodes, self.edges)


@dataclass(frozen=True, eq=False)
class Split:
    """Train / unseen / test node sets, each a sorted id array."""

    train: np.ndarray
    unseen: np.ndarray
    test: np.ndarray
    setting: str
    num_nodes: int

    def __post_init__(self):
        for attr in ("train", "unseen", "test"):
            object.__setattr__(self, attr, np.unique(np.asarray(getattr(self, attr), dtype=np.int64)))
        if self.setting not in ("A", "B"):
            raise SplitError(f"setting must be 'A' or 'B', got {self.setting!r}")
        if self.train.size + self.unseen.size != self.num_nodes or np.intersect1d(self.train, self.unseen).size:
            raise SplitError("train and unseen nodes must partition the node set")
        if not np.isin(self.test, self.unseen).all():
            raise SplitError("test nodes must be a subset of the unseen nodes")

    def to_json(self) -> str:
        return json.dumps({"setting": self.setting, "num_nodes": self.num_nodes,
                           "train": self.train.tolist(), "unseen": self.unseen.tolist(),
                           "test": self.test.tolist()}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Split":
        d = json.loads(text)
        return cls(np.array(d["train"]), np.array(d["unseen"]), np.array(d["test"]),
                   d["setting"], d["num_nodes"])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Split):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __repr__(self) -> str:
        return (f"Split(setting={self.setting}, train={self.train.size}, "
                f"unseen={self.unseen.size}, test={self.test.size})")


def row_normalize(features: np.ndarray) -> np.ndarray:
    """Scale rows to unit L1 norm; all-zero rows stay zero."""
    norms = np.abs(features).sum(axis=1, keepdims=True)
    return np.divide(features, norms, out=np.zeros_like(features), where=norms > 0)


def _read_ids(path: Path) -> np.ndarray:
    text = path.read_text().split()
    return np.array([int(t) for t in text], dtype=np.int64)


def load_bundle(path, normalize: bool = True) -> DatasetBundle:
    path = Path(path)
    meta_path = path / "meta.json"
    for name in ("meta.json", "edges.tsv", "features.bin", "labels.tsv"):
        if not (path / name).is_file():
            raise MissingFileError(f"bundle {path}: missing {name}")
    meta = json.loads(meta_path.read_text())
    try:
        n, f, c = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])
    except KeyError as exc:
        raise BundleError(f"bundle {path}: meta.json lacks {exc.args[0]!r}") from None

    raw = (path / "features.bin").read_bytes()
    if len(raw) != 4 * n * f:
        raise ShapeMismatchError(
            f"bundle {path}: features.bin has {len(raw)} bytes, header implies 4*{n}*{f} = {4 * n * f}")
    features = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, f)
    if normalize:
        features = row_normalize(features)

    labels = _read_ids(path / "labels.tsv")
    if labels.shape[0] != n:
        raise ShapeMismatchError(f"bundle {path}: {labels.shape[0]} labels for {n} nodes")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = int(labels[(labels < 0) | (labels >= c)][0])
        raise LabelRangeError(f"bundle {path}: label {bad} outside [0, {c})")

    edge_text = (path / "edges.tsv").read_text().split()
    if len(edge_text) % 2:
        raise ShapeMismatchError(f"bundle {path}: edges.tsv has an incomplete pair")
    edges = np.array([int(t) for t in edge_text], dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ShapeMismatchError(f"bundle {path}: edge endpoint outside [0, {n})")

    masks = {}
    for key in ("train_mask", "test_mask"):
        fname = meta.get(key)
        if fname:
            mpath = path / fname
            if not mpath.is_file():
                raise MissingFileError(f"bundle {path}: missing {fname}")
            ids = _read_ids(mpath)
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise ShapeMismatchError(f"bundle {path}: {fname} lists a node outside [0, {n})")
            masks[key] = np.unique(ids)
    return DatasetBundle(name=str(meta.get("name", path.name)), features=features, labels=labels,
                         edges=edges, num_classes=c, **masks)


def write_bundle(path, name: str, features, labels, edges, num_classes: int,
                 train_mask=None, test_mask=None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    features = np.asarray(features, dtype="<f4")
    meta = {"name": name, "num_nodes": int(features.shape[0]),
            "num_features": int(features.shape[1]), "num_classes": int(num_classes)}
    for key, ids in (("train_mask", train_mask), ("test_mask", test_mask)):
        if ids is not None:
            meta[key] = f"{key}.txt"
            (path / f"{key}.txt").write_text("".join(f"{int(i)}\n" for i in ids))
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (path / "features.bin").write_bytes(features.tobytes())
    (path / "labels.tsv").write_text("".join(f"{int(y)}\n" for y in labels))
    (path / "edges.tsv").write_text("".join(f"{int(u)}\t{int(v)}\n" for u, v in np.asarray(edges).reshape(-1, 2)))
    return path


def _stratified_sample(labels: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Class-stratified sample; per-class counts use largest remainders."""
    classes, counts = np.unique(labels, return_counts=True)
    quota = counts * size / labels.size
    take = np.floor(quota).astype(np.int64)
    short = size - int(take.sum())
    if short:
        # largest remainder first, ties broken by class id
        order = np.lexsort((classes, -(quota - take)))
        take[order[:short]] += 1
    picked = [rng.choice(np.flatnonzero(labels == c), size=k, replace=False)
              for c, k in zip(classes, take) if k]
    return np.sort(np.concatenate(picked)) if picked else np.empty(0, np.int64)


def build_setting_a(bundle: DatasetBundle, seed: int, train_size: Optional[int] = None,
                    test_size: Optional[int] = None) -> Split:
    """Few labelled training nodes, many unseen nodes.

    Predefined masks in the bundle win.  Otherwise training nodes are a
    seeded class-stratified sample sized as published for the dataset, and
    test nodes are drawn uniformly from the unseen nodes.
    """
    n = bundle.num_nodes
    ref = PUBLISHED_STATS.get(bundle.name.lower())
    if train_size is None:
        if bundle.train_mask is None and ref is None:
            raise SplitError(f"no published training size for {bundle.name!r}; pass train_size")
        train_size = ref["A"]["train"] if ref else bundle.train_mask.size
    if test_size is None:
        test_size = ref["A"]["test"] if ref else DEFAULT_TEST_SIZE
    if bundle.train_mask is not None:
        train = bundle.train_mask
    else:
        if train_size >= n:
            raise SplitError(f"{bundle.name}: {n} nodes cannot hold {train_size} training nodes")
        train = _stratified_sample(bundle.labels, train_size, make_rng(seed, "split-A", "train"))
    unseen = np.setdiff1d(np.arange(n), train)
    if bundle.test_mask is not None:
        test = bundle.test_mask
        if not np.isin(test, unseen).all():
            raise SplitError(f"{bundle.name}: predefined test mask overlaps the training mask")
    else:
        if test_size > unseen.size:
            raise SplitError(f"{bundle.name}: {unseen.size} unseen nodes cannot hold {test_size} test nodes")
        test = make_rng(seed, "split-A", "test").choice(unseen, size=test_size, replace=False)
    return Split(train, unseen, test, "A", n)


def build_setting_b(split: Split, seed: int = 0, test_size: int = DEFAULT_TEST_SIZE) -> Split:
    """Swap the roles of training and unseen nodes.

    From A the new test set is every unseen node.  Inverting a B split
    restores the A node sets and redraws an A-style test set.
    """
    if split.setting == "A":
        return Split(split.unseen, split.train, split.train, "B", split.num_nodes)
    unseen = split.train
    k = min(test_size, unseen.size)
    test = make_rng(seed, "split-A", "test").choice(unseen, size=k, replace=False)
    return Split(split.unseen, unseen, test, "A", split.num_nodes)


def split_edge_stats(bundle_or_graph, split: Split) -> tuple[int, int]:
    """(training edges, unseen edges) under the both-endpoints rule."""
    g = bundle_or_graph.graph() if isinstance(bundle_or_graph, DatasetBundle) else bundle_or_graph
    g_train, _ = induced_training_graph(g, split.train)
    return g_train.num_edges, g.num_edges - g_train.num_edges
