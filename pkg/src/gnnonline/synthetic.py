"""Small citation-like graphs with planted classes, for demos and tests."""
from __future__ import annotations

import numpy as np

from .data import DatasetBundle, row_normalize
from .rng import make_rng


def planted_citation_bundle(num_nodes: int = 300, num_classes: int = 3, num_features: int = 60,
                            avg_degree: float = 4.0, homophily: float = 0.85,
                            words_per_node: int = 8, topic_strength: float = 0.6,
                            seed: int = 0, name: str = "synthetic") -> DatasetBundle:
    """Homophilous random graph with class-correlated binary bag-of-words features.

    Each class owns a contiguous block of "topic" words; a node draws
    ``topic_strength`` of its words from its class block and the rest
    uniformly from the vocabulary.
    """
    rng = make_rng(seed, "synthetic", name)
    labels = np.sort(rng.integers(0, num_classes, size=num_nodes))
    rng.shuffle(labels)
    num_edges = int(round(avg_degree * num_nodes / 2))
    same = rng.random(num_edges) < homophily
    u = rng.integers(0, num_nodes, size=num_edges)
    by_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    v = np.empty(num_edges, dtype=np.int64)
    for i in range(num_edges):
        if same[i]:
            pool = by_class[labels[u[i]]]
        else:
            pool = np.flatnonzero(labels != labels[u[i]])
        v[i] = pool[rng.integers(0, pool.size)] if pool.size else u[i]
    block = max(1, num_features // num_classes)
    feats = np.zeros((num_nodes, num_features), dtype=np.float32)
    for i in range(num_nodes):
        topical = rng.random(words_per_node) < topic_strength
        start = labels[i] * block
        words = np.where(topical, start + rng.integers(0, block, size=words_per_node),
                         rng.integers(0, num_features, size=words_per_node))
        feats[i, np.minimum(words, num_features - 1)] = 1.0
    return DatasetBundle(name=name, features=row_normalize(feats.astype(np.float64)), labels=labels,
                         edges=np.stack([u, v], axis=1), num_classes=num_classes)
