"""Convert the public Planetoid pickles (ind.<name>.*) into a gnnonline bundle.

    python3 tools/planetoid_to_bundle.py --raw-dir planetoid/data --name cora --out data/cora

Node order follows the usual Planetoid loaders: ``allx`` rows first, then the
test rows placed at the ids listed in ``test.index``.  Citeseer's test ids have
gaps (isolated nodes without features); those rows are zero-filled and their
label is class 0, which keeps the published 3327-node count.
"""
import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from gnnonline.data import PUBLISHED_STATS, write_bundle


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def convert(raw: Path, name: str):
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_index = np.array([int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()])
    test_sorted = np.sort(test_index)

    tx, ty = _dense(tx), _dense(ty)
    if name == "citeseer":
        span = test_sorted[-1] - test_sorted[0] + 1
        tx_full = np.zeros((span, tx.shape[1]))
        ty_full = np.zeros((span, ty.shape[1]))
        tx_full[test_sorted - test_sorted[0]] = tx
        ty_full[test_sorted - test_sorted[0]] = ty
        tx, ty = tx_full, ty_full

    features = np.vstack([_dense(allx), tx])
    onehot = np.vstack([_dense(ally), ty])
    features[test_index] = features[test_sorted]
    onehot[test_index] = onehot[test_sorted]
    labels = onehot.argmax(axis=1)

    edges = np.array([(u, v) for u, nbrs in graph.items() for v in nbrs], dtype=np.int64)
    n_train = _dense(y).shape[0]
    return features, labels, edges, onehot.shape[1], n_train, test_index


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--raw-dir", type=Path, required=True)
    p.add_argument("--name", required=True, choices=sorted(PUBLISHED_STATS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--with-masks", action="store_true",
                   help="store the Planetoid train+validation ids and test ids as predefined masks")
    args = p.parse_args(argv)

    features, labels, edges, num_classes, n_train, test_index = convert(args.raw_dir, args.name)
    train_mask = test_mask = None
    if args.with_masks:
        train_mask = np.arange(n_train + 500)
        test_mask = np.sort(test_index)
        published = PUBLISHED_STATS[args.name]["A"]["train"]
        if train_mask.size != published:
            print(f"warning: {train_mask.size} Planetoid train+validation nodes, published setting A "
                  f"uses {published}; drop --with-masks to sample a split of the published size",
                  file=sys.stderr)
    write_bundle(args.out, args.name, features, labels, edges, num_classes, train_mask, test_mask)
    print(f"wrote {args.out}: {features.shape[0]} nodes, {features.shape[1]} features, {num_classes} classes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
